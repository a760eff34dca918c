//! Dense ReLU networks with exact reverse-mode gradients, ADAM, and the
//! diagonal Gaussian policy head.
//!
//! Each layer is a row-major `fan_out × (fan_in + 1)` matrix whose trailing
//! column is the bias, i.e. the layer computes `W [zᵀ, 1]ᵀ`. Hidden layers
//! apply ReLU; the output layer is linear. Batched passes store samples as
//! rows and run through `matrixmultiply`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_out: usize,
    pub fan_in: usize,
    /// Row-major, `fan_out` rows of `fan_in + 1` entries.
    pub weights: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            fan_out,
            fan_in,
            weights: vec![0.0; fan_out * (fan_in + 1)],
        }
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.fan_in + 1
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.stride() + col]
    }

    #[inline]
    pub fn bias(&self, row: usize) -> f64 {
        self.weights[row * self.stride() + self.fan_in]
    }
}

/// Multilayer perceptron; also used as the container for its own gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer outputs of a batched forward pass. `values[0]` is the input,
/// `values[i]` the (post-activation) output of layer `i - 1`.
#[derive(Clone, Debug)]
pub struct Activations {
    pub batch: usize,
    pub values: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("activations always hold the input")
    }
}

/// Which gradients a backward pass should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Want {
    pub params: bool,
    pub input: bool,
}

impl Want {
    pub const PARAMS: Want = Want { params: true, input: false };
    pub const INPUT: Want = Want { params: false, input: true };
    pub const BOTH: Want = Want { params: true, input: true };
}

#[derive(Clone, Debug)]
pub struct Backward {
    pub params: Option<Mlp>,
    pub input: Option<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights in `±√(6 / (fan_in + fan_out))`, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            let stride = layer.stride();
            for row in layer.weights.chunks_exact_mut(stride) {
                for w in &mut row[..stride - 1] {
                    *w = rng.random_range(-limit..limit);
                }
            }
        }
        net
    }

    /// All-zero network with layer widths `sizes` (input first).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        Mlp {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: "at least one layer".into(),
                got: "none".into(),
            });
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.fan_out * (l.fan_in + 1) {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {i}: {} weights", l.fan_out * (l.fan_in + 1)),
                    got: l.weights.len().to_string(),
                });
            }
            if l.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {i}: finite weights"),
                    got: "non-finite entry".into(),
                });
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out != w[1].fan_in {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {} fan_in = {}", i + 1, w[0].fan_out),
                    got: w[1].fan_in.to_string(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.fan_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in, l.fan_out))
                .collect(),
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut())
    }

    /// Flat parameter accessor, layer by layer in row-major order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    /// `self ← κ·src + (1 − κ)·self`.
    pub fn blend_toward(&mut self, src: &Mlp, kappa: f64) {
        for (t, s) in self.params_mut().zip(src.params()) {
            *t = kappa * s + (1.0 - kappa) * *t;
        }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Mlp) {
        for (t, s) in self.params_mut().zip(other.params()) {
            *t += a * s;
        }
    }

    pub fn dot(&self, other: &Mlp) -> f64 {
        self.params().zip(other.params()).map(|(a, b)| a * b).sum()
    }

    /// Evaluates one input vector.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("input of length {}", self.input_dim()),
                got: z.len().to_string(),
            });
        }
        Ok(self.forward_batch(z, 1).output().to_vec())
    }

    /// Evaluates `batch` inputs stored as consecutive rows of `input`.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Activations {
        assert_eq!(input.len(), batch * self.input_dim(), "batched input has the wrong length");
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = values.last().unwrap();
            let mut out = vec![0.0; batch * layer.fan_out];
            let (i, o, s) = (layer.fan_in, layer.fan_out, layer.stride());
            // out(B×o) = prev(B×i) · W[:, :i]ᵀ
            gemm(batch, i, o, prev, i, 1, &layer.weights, 1, s, 0.0, &mut out, o, 1);
            for row in out.chunks_exact_mut(o) {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += layer.weights[j * s + i];
                    if li != last && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            values.push(out);
        }
        Activations { batch, values }
    }

    /// Reverse pass for the batch in `acts`. `upstream` holds `∂L/∂output`
    /// row by row; parameter gradients are summed over the batch.
    ///
    /// The ReLU derivative at zero is taken as zero.
    pub fn backward_batch(&self, acts: &Activations, upstream: &[f64], want: Want) -> Backward {
        let batch = acts.batch;
        assert_eq!(upstream.len(), batch * self.output_dim(), "upstream has the wrong length");
        let mut grads = want.params.then(|| self.zeros_like());
        let mut delta = upstream.to_vec();
        let mut input_grad = None;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (i, o, s) = (layer.fan_in, layer.fan_out, layer.stride());
            let prev = &acts.values[li];
            if let Some(g) = grads.as_mut() {
                let gl = &mut g.layers[li].weights;
                // dW[:, :i](o×i) = δᵀ(o×B) · prev(B×i)
                gemm(o, batch, i, &delta, 1, o, prev, i, 1, 0.0, gl, s, 1);
                for row in delta.chunks_exact(o) {
                    for (j, d) in row.iter().enumerate() {
                        gl[j * s + i] += d;
                    }
                }
            }
            if li == 0 && !want.input {
                break;
            }
            // ∂L/∂prev(B×i) = δ(B×o) · W[:, :i]
            let mut next = vec![0.0; batch * i];
            gemm(batch, o, i, &delta, o, 1, &layer.weights, s, 1, 0.0, &mut next, i, 1);
            if li == 0 {
                input_grad = Some(next);
                break;
            }
            for (d, a) in next.iter_mut().zip(prev) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = next;
        }
        Backward {
            params: grads,
            input: input_grad,
        }
    }

    /// Gradients of `upstreamᵀ · f(z)` with respect to the parameters and to
    /// the input, for a single sample.
    pub fn gradients(&self, z: &[f64], upstream: &[f64]) -> Result<(Mlp, Vec<f64>)> {
        if z.len() != self.input_dim() || upstream.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("({}, {})", self.input_dim(), self.output_dim()),
                got: format!("({}, {})", z.len(), upstream.len()),
            });
        }
        let acts = self.forward_batch(z, 1);
        let b = self.backward_batch(&acts, upstream, Want::BOTH);
        Ok((b.params.unwrap(), b.input.unwrap()))
    }
}

/// `c ← alpha·a·b + beta·c` for strided row/column views, with bounds checks
/// on every operand before handing off to `matrixmultiply`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs
        }
    };
    assert!(k == 0 || last(m, k, rsa, csa) < a.len());
    assert!(k == 0 || last(k, n, rsb, csb) < b.len());
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: every index touched lies within the slices checked above; `c` is
    // a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// ADAM with bias correction over any number of parameter groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn with_groups(lr: f64, group_sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_mlp(net: &Mlp, lr: f64) -> Self {
        let sizes: Vec<usize> = net.layers.iter().map(|l| l.weights.len()).collect();
        Self::with_groups(lr, &sizes)
    }

    pub fn scalar(lr: f64) -> Self {
        Self::with_groups(lr, &[1])
    }

    fn update_group(&mut self, g: usize, params: &mut [f64], grads: &[f64], c1: f64, c2: f64) {
        assert_eq!(params.len(), self.m[g].len(), "parameter group shape changed");
        assert_eq!(params.len(), grads.len());
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, &gr), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m[g].iter_mut().zip(self.v[g].iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * gr;
            *v = b2 * *v + (1.0 - b2) * gr * gr;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    fn advance(&mut self) -> (f64, f64) {
        self.step += 1;
        let t = self.step as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }

    /// One descent step on `net` along `grads`.
    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &Mlp) {
        assert_eq!(net.layers.len(), self.m.len(), "optimizer built for another network");
        let (c1, c2) = self.advance();
        for (g, (layer, grad)) in net.layers.iter_mut().zip(&grads.layers).enumerate() {
            self.update_group(g, &mut layer.weights, &grad.weights, c1, c2);
        }
    }

    /// One descent step on a single scalar parameter.
    pub fn step_scalar(&mut self, value: &mut f64, grad: f64) {
        let (c1, c2) = self.advance();
        self.update_group(0, std::slice::from_mut(value), &[grad], c1, c2);
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Mean and standard deviation of a diagonal Gaussian policy.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicyOutput {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Log density of a diagonal Gaussian, summed over dimensions.
pub fn gaussian_log_prob(out: &GaussianPolicyOutput, u: &[f64]) -> f64 {
    log_prob_slices(&out.mean, &out.sigma, u)
}

pub(crate) fn log_prob_slices(mean: &[f64], sigma: &[f64], u: &[f64]) -> f64 {
    debug_assert!(mean.len() == sigma.len() && mean.len() == u.len());
    mean.iter()
        .zip(sigma)
        .zip(u)
        .map(|((m, s), x)| {
            let z = (x - m) / s;
            -0.5 * z * z - s.ln() - HALF_LN_2PI
        })
        .sum()
}

/// Reparameterized draw `ū + σ ⊙ ξ`.
pub fn sample_action(out: &GaussianPolicyOutput, xi: &[f64]) -> Vec<f64> {
    out.mean
        .iter()
        .zip(&out.sigma)
        .zip(xi)
        .map(|((m, s), x)| m + s * x)
        .collect()
}

/// Splits raw actor outputs `[ū, log σ]` into a Gaussian with the log
/// standard deviation clamped to `[log_std_min, log_std_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead {
    pub action_dim: usize,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl GaussianHead {
    pub fn raw_dim(&self) -> usize {
        2 * self.action_dim
    }

    pub fn split(&self, raw: &[f64]) -> GaussianPolicyOutput {
        let d = self.action_dim;
        GaussianPolicyOutput {
            mean: raw[..d].to_vec(),
            sigma: raw[d..2 * d].iter().map(|l| self.clamp(*l).exp()).collect(),
        }
    }

    #[inline]
    pub fn clamp(&self, log_std: f64) -> f64 {
        log_std.clamp(self.log_std_min, self.log_std_max)
    }

    /// Derivative of the clamp: one strictly inside the range, zero outside.
    #[inline]
    pub fn clamp_grad(&self, log_std: f64) -> f64 {
        if log_std > self.log_std_min && log_std < self.log_std_max {
            1.0
        } else {
            0.0
        }
    }
}
