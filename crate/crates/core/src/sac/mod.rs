//! Soft actor-critic with twin critics, slow targets and automatic
//! temperature tuning.

mod replay;
pub mod tabular;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baseline::wrap_angle;
use crate::error::{Error, Result};
use crate::nn::{log_prob_slices, Adam, GaussianHead, GaussianPolicyOutput, Mlp, Want};

pub use replay::{Batch, ReplayMemory, Transition};

pub const STATE_DIM: usize = 15;
pub const ACTION_DIM: usize = 3;
pub const CRITIC_INPUT_DIM: usize = STATE_DIM + ACTION_DIM;

/// Diagonal weights of the quadratic tracking reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub g: [f64; 6],
    pub h: [f64; 3],
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            g: [0.025, 0.025, 0.0016, 0.005, 0.001, 0.0],
            h: [1.25e-4, 1.25e-4, 8.3e-5],
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("reward.g", "entries must be finite and nonnegative"));
        }
        if self.h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("reward.h", "entries must be finite and positive"));
        }
        Ok(())
    }
}

/// `−(x − x_m)ᵀ G (x − x_m) − u_lᵀ H u_l`, with the heading difference
/// wrapped to `(−π, π]`.
pub fn reward(x: &[f64; 6], x_m: &[f64; 6], u_l: &[f64; 3], w: &RewardWeights) -> f64 {
    let track: f64 = (0..6)
        .map(|i| {
            let e = if i == 2 { wrap_angle(x[i] - x_m[i]) } else { x[i] - x_m[i] };
            w.g[i] * e * e
        })
        .sum();
    let effort: f64 = (0..3).map(|i| w.h[i] * u_l[i] * u_l[i]).sum();
    -track - effort
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub lr_alpha: f64,
    pub kappa: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub hidden: Vec<usize>,
    pub target_entropy: f64,
    pub init_alpha: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Multiplier on the Glorot range of the actor's output layer.
    pub actor_output_init_scale: f64,
    /// Initial bias of the log-std outputs.
    pub init_log_std: f64,
    /// Per-axis limit of `u_l`, enforced by `tanh` squashing; `null` leaves
    /// the Gaussian unbounded.
    pub action_bound: Option<[f64; ACTION_DIM]>,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            gamma: 0.998,
            lr_critic: 1e-3,
            lr_actor: 1e-4,
            lr_alpha: 1e-4,
            kappa: 0.01,
            batch_size: 128,
            replay_capacity: 1_000_000,
            hidden: vec![128, 128],
            target_entropy: -(ACTION_DIM as f64),
            init_alpha: 1e-3,
            log_std_min: -20.0,
            log_std_max: 2.0,
            actor_output_init_scale: 1e-2,
            init_log_std: 0.0,
            action_bound: Some([2.0, 4.0, 1.0]),
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sac.lr_critic", self.lr_critic),
            ("sac.lr_actor", self.lr_actor),
            ("sac.lr_alpha", self.lr_alpha),
            ("sac.init_alpha", self.init_alpha),
            ("sac.actor_output_init_scale", self.actor_output_init_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, "must be finite and positive"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("sac.gamma", "must lie in (0, 1)"));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::config("sac.kappa", "must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("sac.batch_size", "must be at least 1"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::config("sac.replay_capacity", "must be at least the batch size"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("sac.hidden", "needs at least one nonempty hidden layer"));
        }
        if !self.target_entropy.is_finite() {
            return Err(Error::config("sac.target_entropy", "must be finite"));
        }
        if !(self.log_std_min.is_finite() && self.log_std_max.is_finite() && self.log_std_min < self.log_std_max) {
            return Err(Error::config("sac.log_std_min", "must be finite and below log_std_max"));
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::config("sac.init_log_std", "must be finite"));
        }
        if let Some(b) = self.action_bound {
            if b.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::config("sac.action_bound", "entries must be finite and positive"));
            }
        }
        Ok(())
    }

    pub fn head(&self) -> PolicyHead {
        PolicyHead {
            gaussian: GaussianHead {
                action_dim: ACTION_DIM,
                log_std_min: self.log_std_min,
                log_std_max: self.log_std_max,
            },
            bound: self.action_bound,
        }
    }

    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.hidden);
        s.push(output);
        s
    }
}

/// Gaussian over the pre-squash action `z`, mapped to `u = b ⊙ tanh(z)`
/// when a bound `b` is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyHead {
    pub gaussian: GaussianHead,
    pub bound: Option<[f64; ACTION_DIM]>,
}

impl PolicyHead {
    pub fn squash(&self, z: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        match self.bound {
            Some(b) => std::array::from_fn(|k| b[k] * z[k].tanh()),
            None => *z,
        }
    }
}

/// `ln(1 − tanh² z)` without cancellation for large `|z|`.
fn log1m_tanh2(z: f64) -> f64 {
    let x = -2.0 * z;
    let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - z - softplus)
}

/// Networks, optimizer states and temperature of the learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub config: SacConfig,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub log_alpha: f64,
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub alpha_opt: Adam,
}

/// Losses reported by one gradient phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseStats {
    pub j_q: f64,
    pub j_pi: f64,
    pub alpha: f64,
}

/// Actor objective and its gradient for a fixed noise draw.
#[derive(Clone, Debug)]
pub struct ActorEval {
    pub loss: f64,
    pub mean_log_pi: f64,
    pub grad: Mlp,
}

/// Row-wise concatenation of states and actions.
pub fn critic_input(s: &[f64], u: &[f64], n: usize) -> Vec<f64> {
    debug_assert!(s.len() == n * STATE_DIM && u.len() == n * ACTION_DIM);
    let mut out = Vec::with_capacity(n * CRITIC_INPUT_DIM);
    for (si, ui) in s.chunks_exact(STATE_DIM).zip(u.chunks_exact(ACTION_DIM)) {
        out.extend_from_slice(si);
        out.extend_from_slice(ui);
    }
    out
}

pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Reparameterized policy draws for a batch. With `xi = None` the action is
/// the (squashed) mean.
struct PolicyBatch {
    raw: crate::nn::Activations,
    sigma: Vec<f64>,
    /// `tanh(z)` per entry; empty without a bound.
    tanh: Vec<f64>,
    u: Vec<f64>,
    log_pi: Vec<f64>,
}

fn policy_batch(actor: &Mlp, head: &PolicyHead, s: &[f64], n: usize, xi: Option<&[f64]>) -> PolicyBatch {
    let raw = actor.forward_batch(s, n);
    let out = raw.output();
    let d = ACTION_DIM;
    let mut sigma = Vec::with_capacity(n * d);
    let mut tanh = Vec::with_capacity(if head.bound.is_some() { n * d } else { 0 });
    let mut u = Vec::with_capacity(n * d);
    let mut log_pi = Vec::with_capacity(n);
    for (i, row) in out.chunks_exact(2 * d).enumerate() {
        let mean = &row[..d];
        let sg: Vec<f64> = row[d..].iter().map(|l| head.gaussian.clamp(*l).exp()).collect();
        let z: Vec<f64> = match xi {
            Some(xi) => (0..d).map(|k| mean[k] + sg[k] * xi[i * d + k]).collect(),
            None => mean.to_vec(),
        };
        let mut lp = log_prob_slices(mean, &sg, &z);
        match head.bound {
            Some(b) => {
                for k in 0..d {
                    let t = z[k].tanh();
                    tanh.push(t);
                    u.push(b[k] * t);
                    lp -= b[k].ln() + log1m_tanh2(z[k]);
                }
            }
            None => u.extend_from_slice(&z),
        }
        log_pi.push(lp);
        sigma.extend_from_slice(&sg);
    }
    PolicyBatch { raw, sigma, tanh, u, log_pi }
}

/// Reparameterized actions for a batch of states.
pub fn policy_actions(actor: &Mlp, head: &PolicyHead, s: &[f64], xi: &[f64]) -> Vec<f64> {
    policy_batch(actor, head, s, s.len() / STATE_DIM, Some(xi)).u
}

/// `½ mean (Q(s,u) − Y)²` for one critic.
pub fn critic_loss(critic: &Mlp, input: &[f64], y: &[f64]) -> f64 {
    let n = y.len();
    let q = critic.forward_batch(input, n);
    q.output().iter().zip(y).map(|(q, y)| 0.5 * (q - y).powi(2)).sum::<f64>() / n as f64
}

/// Loss and parameter gradient of [`critic_loss`].
pub fn critic_loss_grad(critic: &Mlp, input: &[f64], y: &[f64]) -> (f64, Mlp) {
    let n = y.len();
    let acts = critic.forward_batch(input, n);
    let diff: Vec<f64> = acts.output().iter().zip(y).map(|(q, y)| q - y).collect();
    let loss = diff.iter().map(|d| 0.5 * d * d).sum::<f64>() / n as f64;
    let up: Vec<f64> = diff.iter().map(|d| d / n as f64).collect();
    let grad = critic.backward_batch(&acts, &up, Want::PARAMS).params.unwrap();
    (loss, grad)
}

/// `mean[α ln π(u|s) − Q(s, u)]` with `z = ū + σ ⊙ ξ` (squashed when
/// bounded); returns the loss and `mean ln π`.
pub fn actor_loss(actor: &Mlp, critic: &Mlp, head: &PolicyHead, alpha: f64, s: &[f64], xi: &[f64]) -> (f64, f64) {
    let n = s.len() / STATE_DIM;
    let p = policy_batch(actor, head, s, n, Some(xi));
    let q = critic.forward_batch(&critic_input(s, &p.u, n), n);
    let loss = p.log_pi.iter().zip(q.output()).map(|(lp, q)| alpha * lp - q).sum::<f64>() / n as f64;
    (loss, p.log_pi.iter().sum::<f64>() / n as f64)
}

/// Loss and actor-parameter gradient of [`actor_loss`].
///
/// Under the reparameterization the Gaussian part of `ln π` depends on the
/// parameters only through `−Σ ln σ`. With `g = ∂L/∂z`, per sample
/// `∂L/∂ū = g` and `∂L/∂ln σ = −α + g ⊙ σ ⊙ ξ`, where `g = −∂Q/∂u`
/// unbounded and `g = −(∂Q/∂u) b (1 − t²) + 2αt` with `t = tanh z` when
/// squashed.
pub fn actor_loss_grad(actor: &Mlp, critic: &Mlp, head: &PolicyHead, alpha: f64, s: &[f64], xi: &[f64]) -> ActorEval {
    let n = s.len() / STATE_DIM;
    let d = ACTION_DIM;
    let p = policy_batch(actor, head, s, n, Some(xi));
    let q_acts = critic.forward_batch(&critic_input(s, &p.u, n), n);
    let loss = p.log_pi.iter().zip(q_acts.output()).map(|(lp, q)| alpha * lp - q).sum::<f64>() / n as f64;
    let dq = critic
        .backward_batch(&q_acts, &vec![1.0; n], Want::INPUT)
        .input
        .unwrap();
    let scale = 1.0 / n as f64;
    let raw = p.raw.output();
    let mut up = vec![0.0; n * 2 * d];
    for i in 0..n {
        for k in 0..d {
            let dq_du = dq[i * CRITIC_INPUT_DIM + STATE_DIM + k];
            let sig = p.sigma[i * d + k];
            let g = match head.bound {
                Some(b) => {
                    let t = p.tanh[i * d + k];
                    -dq_du * b[k] * (1.0 - t * t) + 2.0 * alpha * t
                }
                None => -dq_du,
            };
            up[i * 2 * d + k] = g * scale;
            let dls = -alpha + g * sig * xi[i * d + k];
            up[i * 2 * d + d + k] = dls * head.gaussian.clamp_grad(raw[i * 2 * d + d + k]) * scale;
        }
    }
    let grad = actor.backward_batch(&p.raw, &up, Want::PARAMS).params.unwrap();
    ActorEval {
        loss,
        mean_log_pi: p.log_pi.iter().sum::<f64>() / n as f64,
        grad,
    }
}

/// `J_α = α (−mean ln π − H̄)` as a function of `ln α`.
pub fn temperature_loss(log_alpha: f64, mean_log_pi: f64, target_entropy: f64) -> f64 {
    log_alpha.exp() * (-mean_log_pi - target_entropy)
}

/// `∂J_α/∂ln α`.
pub fn temperature_grad(log_alpha: f64, mean_log_pi: f64, target_entropy: f64) -> f64 {
    log_alpha.exp() * (-mean_log_pi - target_entropy)
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(config: SacConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut actor = Mlp::new(&config.sizes(STATE_DIM, 2 * ACTION_DIM), rng);
        let last = actor.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w *= config.actor_output_init_scale);
        let cols = last.fan_in + 1;
        for row in ACTION_DIM..2 * ACTION_DIM {
            last.weights[row * cols + last.fan_in] = config.init_log_std;
        }
        let critic_sizes = config.sizes(CRITIC_INPUT_DIM, 1);
        let critics = [Mlp::new(&critic_sizes, rng), Mlp::new(&critic_sizes, rng)];
        let targets = critics.clone();
        Ok(Agent {
            actor_opt: Adam::for_mlp(&actor, config.lr_actor),
            critic_opts: [
                Adam::for_mlp(&critics[0], config.lr_critic),
                Adam::for_mlp(&critics[1], config.lr_critic),
            ],
            alpha_opt: Adam::scalar(config.lr_alpha),
            log_alpha: config.init_alpha.ln(),
            actor,
            critics,
            targets,
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn head(&self) -> PolicyHead {
        self.config.head()
    }

    /// The Gaussian over the pre-squash action.
    pub fn policy(&self, s: &[f64; STATE_DIM]) -> GaussianPolicyOutput {
        let raw = self.actor.forward_batch(s, 1);
        self.head().gaussian.split(raw.output())
    }

    /// Deterministic action: the squashed mean.
    pub fn mean_action(&self, s: &[f64; STATE_DIM]) -> [f64; ACTION_DIM] {
        let raw = self.actor.forward_batch(s, 1);
        let mut z = [0.0; ACTION_DIM];
        z.copy_from_slice(&raw.output()[..ACTION_DIM]);
        self.head().squash(&z)
    }

    /// Exploratory action from `z = ū + σ ⊙ ξ`.
    pub fn sample_action<R: Rng + ?Sized>(&self, s: &[f64; STATE_DIM], rng: &mut R) -> [f64; ACTION_DIM] {
        let p = self.policy(s);
        let z = std::array::from_fn(|k| p.mean[k] + p.sigma[k] * rng.sample::<f64, _>(StandardNormal));
        self.head().squash(&z)
    }

    pub fn is_finite(&self) -> bool {
        self.log_alpha.is_finite()
            && self.actor.is_finite()
            && self.critics.iter().all(Mlp::is_finite)
            && self.targets.iter().all(Mlp::is_finite)
    }

    /// `Y = r + γ (min_j Q̄_j(s′, u′) − α ln π(u′|s′))`, with the bootstrap
    /// dropped on `done`. `xi = None` uses the mean action and no entropy
    /// term.
    pub fn target_values_with(&self, batch: &Batch, xi: Option<&[f64]>) -> Vec<f64> {
        let n = batch.size;
        let gamma = self.config.gamma;
        let alpha = self.alpha();
        let p = policy_batch(&self.actor, &self.head(), &batch.s_next, n, xi);
        let input = critic_input(&batch.s_next, &p.u, n);
        let q1 = self.targets[0].forward_batch(&input, n);
        let q2 = self.targets[1].forward_batch(&input, n);
        (0..n)
            .map(|i| {
                if batch.done[i] {
                    return batch.r[i];
                }
                let q = q1.output()[i].min(q2.output()[i]);
                let ent = if xi.is_some() { alpha * p.log_pi[i] } else { 0.0 };
                batch.r[i] + gamma * (q - ent)
            })
            .collect()
    }

    pub fn target_values<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Vec<f64> {
        let xi = draw_noise(rng, batch.size * ACTION_DIM);
        self.target_values_with(batch, Some(&xi))
    }

    /// One ADAM step for both critics toward `y`; returns the mean of the two
    /// losses.
    pub fn critic_update(&mut self, batch: &Batch, y: &[f64]) -> Result<f64> {
        let input = critic_input(&batch.s, &batch.u, batch.size);
        let mut total = 0.0;
        for j in 0..2 {
            let (loss, grad) = critic_loss_grad(&self.critics[j], &input, y);
            if !loss.is_finite() {
                return Err(Error::NonFinite { what: "critic loss" });
            }
            self.critic_opts[j].step_mlp(&mut self.critics[j], &grad);
            total += loss;
        }
        Ok(0.5 * total)
    }

    /// One ADAM step on the actor with fresh noise; returns
    /// `(J_π, mean ln π)`.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<(f64, f64)> {
        let xi = draw_noise(rng, batch.size * ACTION_DIM);
        let eval = actor_loss_grad(&self.actor, &self.critics[0], &self.head(), self.alpha(), &batch.s, &xi);
        if !eval.loss.is_finite() {
            return Err(Error::NonFinite { what: "actor loss" });
        }
        self.actor_opt.step_mlp(&mut self.actor, &eval.grad);
        Ok((eval.loss, eval.mean_log_pi))
    }

    pub fn temperature_update(&mut self, mean_log_pi: f64) -> Result<()> {
        let g = temperature_grad(self.log_alpha, mean_log_pi, self.config.target_entropy);
        if !g.is_finite() {
            return Err(Error::NonFinite { what: "temperature gradient" });
        }
        self.alpha_opt.step_scalar(&mut self.log_alpha, g);
        Ok(())
    }

    /// `θ̄_j ← κ θ_j + (1 − κ) θ̄_j`.
    pub fn soft_update(&mut self, kappa: f64) {
        for j in 0..2 {
            self.targets[j].blend_toward(&self.critics[j], kappa);
        }
    }

    /// Critic, actor, temperature and target updates on one sampled batch.
    /// Returns `None` while the memory holds fewer than a batch.
    pub fn gradient_phase<R: Rng + ?Sized>(&mut self, memory: &ReplayMemory, rng: &mut R) -> Result<Option<PhaseStats>> {
        let Some(batch) = memory.sample(rng, self.config.batch_size) else {
            return Ok(None);
        };
        let y = self.target_values(&batch, rng);
        let j_q = self.critic_update(&batch, &y)?;
        let (j_pi, mean_log_pi) = self.actor_update(&batch, rng)?;
        self.temperature_update(mean_log_pi)?;
        self.soft_update(self.config.kappa);
        if !self.is_finite() {
            return Err(Error::NonFinite { what: "network parameters" });
        }
        Ok(Some(PhaseStats { j_q, j_pi, alpha: self.alpha() }))
    }

    /// Critic regression on `memory` with the mean action and no entropy
    /// term, until the loss falls below `threshold` or `max_iters` updates.
    /// Targets are then copied from the critics. Returns the final loss and
    /// the number of updates.
    pub fn pretrain_critics<R: Rng + ?Sized>(
        &mut self,
        memory: &ReplayMemory,
        threshold: f64,
        max_iters: usize,
        rng: &mut R,
    ) -> Result<(f64, usize)> {
        let n = self.config.batch_size.min(memory.len());
        if n == 0 {
            return Err(Error::config("pretrain", "replay memory is empty"));
        }
        let mut loss = f64::INFINITY;
        let mut iters = 0;
        while iters < max_iters.max(1) {
            let batch = memory.sample(rng, n).expect("n ≤ len");
            let y = self.target_values_with(&batch, None);
            loss = self.critic_update(&batch, &y)?;
            self.soft_update(self.config.kappa);
            iters += 1;
            if loss < threshold {
                break;
            }
        }
        if loss >= threshold {
            log::warn!("critic pretraining stopped at J_Q = {loss:.4e} after {iters} updates");
        }
        self.targets = self.critics.clone();
        Ok((loss, iters))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gaussian_log_prob;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tiny_config() -> SacConfig {
        SacConfig {
            hidden: vec![8, 8],
            batch_size: 4,
            actor_output_init_scale: 1.0,
            init_alpha: 0.2,
            ..SacConfig::default()
        }
    }

    fn random_batch(r: &mut ChaCha8Rng, n: usize) -> Batch {
        let ts: Vec<Transition> = (0..n)
            .map(|_| Transition {
                s: std::array::from_fn(|_| r.random_range(-1.0..1.0)),
                u_l: std::array::from_fn(|_| r.random_range(-1.0..1.0)),
                r: -r.random::<f64>(),
                s_next: std::array::from_fn(|_| r.random_range(-1.0..1.0)),
                done: false,
            })
            .collect();
        Batch::from_transitions(&ts)
    }

    #[test]
    fn reward_examples() {
        let w = RewardWeights::default();
        let z = [0.0; 6];
        assert_eq!(reward(&z, &z, &[0.0; 3], &w), 0.0);
        assert_relative_eq!(reward(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &z, &[0.0; 3], &w), -0.025);
        assert_relative_eq!(reward(&z, &z, &[1.0, 0.0, 0.0], &w), -1.25e-4);
        let turned = [0.0, 0.0, 2.0 * std::f64::consts::PI + 0.1, 0.0, 0.0, 0.0];
        assert_relative_eq!(reward(&turned, &z, &[0.0; 3], &w), -0.0016 * 0.01, epsilon = 1e-15);
        assert!(w.validate().is_ok());
        let bad = RewardWeights { h: [0.0, 1.0, 1.0], ..w };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_discount_target_is_reward() {
        let mut r = rng(1);
        let agent = Agent::new(SacConfig { gamma: 1e-300, ..tiny_config() }, &mut r).unwrap();
        let b = random_batch(&mut r, 5);
        let y = agent.target_values(&b, &mut r);
        for (a, e) in y.iter().zip(&b.r) {
            assert_relative_eq!(*a, *e, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_targets_and_vanishing_alpha() {
        let mut r = rng(2);
        let mut agent = Agent::new(tiny_config(), &mut r).unwrap();
        agent.log_alpha = -700.0;
        for t in &mut agent.targets {
            t.params_mut().for_each(|p| *p = 0.0);
            let last = t.layers.last_mut().unwrap();
            let s = last.stride();
            last.weights[s - 1] = -2.5;
        }
        let mut b = random_batch(&mut r, 6);
        b.done[2] = true;
        let y = agent.target_values(&b, &mut r);
        for i in 0..6 {
            let want = if i == 2 { b.r[i] } else { b.r[i] + agent.config.gamma * -2.5 };
            assert_relative_eq!(y[i], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn target_matches_manual_evaluation() {
        let mut r = rng(3);
        let agent = Agent::new(tiny_config(), &mut r).unwrap();
        let b = random_batch(&mut r, 3);
        let xi = draw_noise(&mut r, 3 * ACTION_DIM);
        let y = agent.target_values_with(&b, Some(&xi));
        for i in 0..3 {
            let sn = &b.s_next[i * STATE_DIM..(i + 1) * STATE_DIM];
            let pol = agent.head().gaussian.split(&agent.actor.forward(sn).unwrap());
            let pre: Vec<f64> = (0..3).map(|k| pol.mean[k] + pol.sigma[k] * xi[i * 3 + k]).collect();
            let bound = agent.config.action_bound.unwrap();
            let u: Vec<f64> = (0..3).map(|k| bound[k] * pre[k].tanh()).collect();
            let mut z = sn.to_vec();
            z.extend(&u);
            let q1 = agent.targets[0].forward(&z).unwrap()[0];
            let q2 = agent.targets[1].forward(&z).unwrap()[0];
            let jac: f64 = (0..3).map(|k| (bound[k] * (1.0 - pre[k].tanh().powi(2))).ln()).sum();
            let lp = gaussian_log_prob(&pol, &pre) - jac;
            let want = b.r[i] + agent.config.gamma * q1.min(q2) - agent.config.gamma * agent.alpha() * lp;
            assert_relative_eq!(y[i], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn log1m_tanh2_is_stable() {
        for z in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            assert_relative_eq!(log1m_tanh2(z), (1.0 - f64::tanh(z).powi(2)).ln(), epsilon = 1e-12);
        }
        // 1 − tanh² underflows to 0 here; the asymptote is ln 4 − 2|z|
        assert_relative_eq!(log1m_tanh2(400.0), 4f64.ln() - 800.0, epsilon = 1e-9);
        assert_relative_eq!(log1m_tanh2(-400.0), 4f64.ln() - 800.0, epsilon = 1e-9);
    }

    #[test]
    fn squashed_actions_respect_bounds() {
        let mut r = rng(11);
        let mut config = tiny_config();
        config.init_log_std = 2.0;
        config.actor_output_init_scale = 100.0;
        let agent = Agent::new(config, &mut r).unwrap();
        let b = agent.config.action_bound.unwrap();
        for _ in 0..200 {
            let s: [f64; STATE_DIM] = std::array::from_fn(|_| r.random_range(-10.0..10.0));
            for u in [agent.sample_action(&s, &mut r), agent.mean_action(&s)] {
                assert!((0..3).all(|k| u[k].abs() <= b[k]));
            }
        }
        let mut unbounded = agent.clone();
        unbounded.config.action_bound = None;
        let s = [3.0; STATE_DIM];
        let z = unbounded.mean_action(&s);
        let u = agent.mean_action(&s);
        for k in 0..3 {
            assert_relative_eq!(u[k], b[k] * z[k].tanh(), epsilon = 1e-12);
        }
    }

    #[test]
    fn critic_at_target_is_stationary() {
        let mut r = rng(4);
        let mut agent = Agent::new(tiny_config(), &mut r).unwrap();
        let b = random_batch(&mut r, 4);
        let input = critic_input(&b.s, &b.u, 4);
        let y: Vec<f64> = agent.critics[0].forward_batch(&input, 4).output().to_vec();
        // make both critics identical so one target fits both
        agent.critics[1] = agent.critics[0].clone();
        let before = agent.critics.clone();
        let loss = agent.critic_update(&b, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(agent.critics, before);
    }

    #[test]
    fn linear_critic_gradient_by_hand() {
        // Q = w·z + b on 18 inputs; batch of two
        let mut critic = Mlp::zeros(&[CRITIC_INPUT_DIM, 1]);
        critic.layers[0].weights[0] = 2.0;
        critic.layers[0].weights[CRITIC_INPUT_DIM] = 0.5;
        let mut z1 = vec![0.0; CRITIC_INPUT_DIM];
        z1[0] = 1.0;
        let mut z2 = vec![0.0; CRITIC_INPUT_DIM];
        z2[0] = -1.0;
        z2[17] = 3.0;
        let input: Vec<f64> = z1.iter().chain(&z2).copied().collect();
        let y = [1.0, 0.0];
        // Q = (2.5, −1.5); residuals (1.5, −1.5)
        let (loss, g) = critic_loss_grad(&critic, &input, &y);
        assert_relative_eq!(loss, 0.5 * (2.25 + 2.25) / 2.0);
        let w = &g.layers[0].weights;
        assert_relative_eq!(w[0], (1.5 * 1.0 + -1.5 * -1.0) / 2.0);
        assert_relative_eq!(w[17], (-1.5 * 3.0) / 2.0);
        assert_relative_eq!(w[CRITIC_INPUT_DIM], 0.0);
    }

    #[test]
    fn critic_loss_falls_on_frozen_batch() {
        let mut r = rng(5);
        let mut agent = Agent::new(tiny_config(), &mut r).unwrap();
        let b = random_batch(&mut r, 16);
        let y = agent.target_values(&b, &mut r);
        let mut losses = Vec::new();
        for _ in 0..50 {
            losses.push(agent.critic_update(&b, &y).unwrap());
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn no_signal_no_actor_gradient() {
        let mut r = rng(6);
        let agent = Agent::new(tiny_config(), &mut r).unwrap();
        let mut flat = agent.critics[0].zeros_like();
        let last = flat.layers.last_mut().unwrap();
        let s = last.stride();
        last.weights[s - 1] = 4.0;
        let b = random_batch(&mut r, 4);
        let xi = draw_noise(&mut r, 12);
        let eval = actor_loss_grad(&agent.actor, &flat, &agent.head(), 0.0, &b.s, &xi);
        assert!(eval.grad.params().all(|g| *g == 0.0));
    }

    #[test]
    fn actor_reaches_quadratic_optimum() {
        // critic Q(s, u) = −Σ(u_k − 3)² built from ReLU units on u
        let mut r = rng(7);
        let cfg = SacConfig { lr_actor: 1e-2, action_bound: None, ..tiny_config() };
        let mut agent = Agent::new(cfg, &mut r).unwrap();
        let quad = |u: &[f64]| -> f64 { -u.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>() };
        let s = vec![0.3; STATE_DIM * 8];
        for _ in 0..3000 {
            let xi = vec![0.0; 8 * ACTION_DIM];
            // exact gradient of the quadratic critic replaces the network
            let p = policy_batch(&agent.actor, &agent.head(), &s, 8, Some(&xi));
            let mut up = vec![0.0; 8 * 2 * ACTION_DIM];
            for i in 0..8 {
                for k in 0..ACTION_DIM {
                    up[i * 6 + k] = 2.0 * (p.u[i * 3 + k] - 3.0) / 8.0;
                }
            }
            let g = agent.actor.backward_batch(&p.raw, &up, Want::PARAMS).params.unwrap();
            agent.actor_opt.step_mlp(&mut agent.actor, &g);
        }
        let u = agent.mean_action(&std::array::from_fn(|_| 0.3));
        assert!(quad(&u) > -1e-4, "{u:?}");
    }

    #[test]
    fn temperature_direction() {
        let h = -3.0;
        assert_eq!(temperature_grad(0.0, 3.0, h), 0.0);
        // entropy above target: ln π very negative → positive gradient, α shrinks
        let mut agent = Agent::new(tiny_config(), &mut rng(8)).unwrap();
        let before = agent.alpha();
        agent.temperature_update(-10.0).unwrap();
        assert!(agent.alpha() < before);
        // unit Gaussian at its mean: −ln π − H̄ = 2.7568 + 3 > 0
        assert!(temperature_grad(0.0, -2.7568, h) > 0.0);
        // entropy below target: α grows
        let mut agent = Agent::new(tiny_config(), &mut rng(8)).unwrap();
        let before = agent.alpha();
        agent.temperature_update(5.0).unwrap();
        assert!(agent.alpha() > before);
    }

    #[test]
    fn soft_update_examples() {
        let mut agent = Agent::new(tiny_config(), &mut rng(9)).unwrap();
        for t in &mut agent.targets {
            t.params_mut().for_each(|p| *p = 0.0);
        }
        for c in &mut agent.critics {
            c.params_mut().for_each(|p| *p = 1.0);
        }
        agent.soft_update(0.01);
        assert!(agent.targets[0].params().all(|p| (*p - 0.01).abs() < 1e-15));
        let gap = |a: &Agent| -> f64 {
            a.targets[0].params().zip(a.critics[0].params()).map(|(t, c)| (t - c).powi(2)).sum::<f64>().sqrt()
        };
        let g0 = gap(&agent);
        agent.soft_update(0.01);
        assert_relative_eq!(gap(&agent), 0.99 * g0, epsilon = 1e-12);
        agent.soft_update(1.0);
        assert_eq!(agent.targets, agent.critics);
    }

    #[test]
    fn pretraining_with_zero_discount_regresses_rewards() {
        let mut r = rng(10);
        let cfg = SacConfig { gamma: 1e-12, batch_size: 200, hidden: vec![32, 32], ..tiny_config() };
        let mut agent = Agent::new(cfg, &mut r).unwrap();
        let mut mem = ReplayMemory::new(1000);
        for _ in 0..200 {
            let s: [f64; STATE_DIM] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
            mem.push(Transition { s, u_l: [0.0; 3], r: -0.5 * s[0].abs() - 0.1, s_next: s, done: false });
        }
        let (loss, iters) = agent.pretrain_critics(&mem, 1e-2, 2000, &mut r).unwrap();
        assert!(loss < 1e-2, "{loss} after {iters}");
        assert_eq!(agent.targets, agent.critics);
    }

    #[test]
    fn infinite_threshold_is_single_pass() {
        let mut r = rng(11);
        let mut agent = Agent::new(tiny_config(), &mut r).unwrap();
        let mut mem = ReplayMemory::new(10);
        for _ in 0..10 {
            mem.push(Transition { s: [0.1; 15], u_l: [0.0; 3], r: -1.0, s_next: [0.2; 15], done: false });
        }
        let (_, iters) = agent.pretrain_critics(&mem, f64::INFINITY, 2000, &mut r).unwrap();
        assert_eq!(iters, 1);
        assert_eq!(agent.targets, agent.critics);
    }

    #[test]
    fn gradient_phase_is_deterministic() {
        let run = || {
            let mut r = rng(12);
            let mut agent = Agent::new(tiny_config(), &mut r).unwrap();
            let mut mem = ReplayMemory::new(100);
            for t in random_batch_transitions(&mut r, 20) {
                mem.push(t);
            }
            for _ in 0..5 {
                agent.gradient_phase(&mem, &mut r).unwrap().unwrap();
            }
            agent
        };
        assert_eq!(run(), run());
    }

    fn random_batch_transitions(r: &mut ChaCha8Rng, n: usize) -> Vec<Transition> {
        (0..n)
            .map(|_| Transition {
                s: std::array::from_fn(|_| r.random_range(-1.0..1.0)),
                u_l: std::array::from_fn(|_| r.random_range(-1.0..1.0)),
                r: -r.random::<f64>(),
                s_next: std::array::from_fn(|_| r.random_range(-1.0..1.0)),
                done: false,
            })
            .collect()
    }

    #[test]
    fn agent_round_trips_through_json() {
        let agent = Agent::new(tiny_config(), &mut rng(13)).unwrap();
        let text = serde_json::to_string(&agent).unwrap();
        let back: Agent = serde_json::from_str(&text).unwrap();
        assert_eq!(agent, back);
    }
}
