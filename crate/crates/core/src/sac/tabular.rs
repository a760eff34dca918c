//! Exact soft policy iteration on small finite MDPs.
//!
//! Evaluation solves `V = r_π + γ P_π V` directly, where
//! `r_π(s) = Σ_a π(a|s) (R(s,a) − α ln π(a|s))`, then sets
//! `Q(s,a) = R(s,a) + γ Σ_s′ P(s′|s,a) V(s′)`. Improvement is the softmax of
//! `Q/α`, the exact minimizer of the KL projection.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `P(s′|s,a)` at `(s * n_actions + a) * n_states + s′`.
    pub transition: Vec<f64>,
    /// `R(s,a)` at `s * n_actions + a`.
    pub reward: Vec<f64>,
}

impl FiniteMdp {
    pub fn new(n_states: usize, n_actions: usize, transition: Vec<f64>, reward: Vec<f64>) -> Result<Self> {
        let mdp = FiniteMdp { n_states, n_actions, transition, reward };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::config("mdp", "needs at least one state and one action"));
        }
        if self.transition.len() != ns * na * ns || self.reward.len() != ns * na {
            return Err(Error::ShapeMismatch {
                expected: format!("{} transitions and {} rewards", ns * na * ns, ns * na),
                got: format!("{} and {}", self.transition.len(), self.reward.len()),
            });
        }
        for row in self.transition.chunks_exact(ns) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::config("mdp.transition", "rows must be probability vectors"));
            }
        }
        if self.reward.iter().any(|r| !(r.is_finite() && *r <= 0.0)) {
            return Err(Error::config("mdp.reward", "rewards must be finite and nonpositive"));
        }
        Ok(())
    }

    /// Random MDP with rewards in `(−1, 0]` and dense transition rows.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> Self {
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let row: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
            let sum: f64 = row.iter().sum();
            transition.extend(row.iter().map(|p| p / sum));
        }
        let reward = (0..n_states * n_actions).map(|_| -rng.random::<f64>()).collect();
        FiniteMdp { n_states, n_actions, transition, reward }
    }

    fn p(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn uniform_policy(&self) -> Vec<f64> {
        vec![1.0 / self.n_actions as f64; self.n_states * self.n_actions]
    }
}

fn entropy_term(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Soft state value `V(s) = Σ_a π (Q − α ln π)`.
pub fn soft_value(q: &[f64], policy: &[f64], n_actions: usize, alpha: f64) -> Vec<f64> {
    q.chunks_exact(n_actions)
        .zip(policy.chunks_exact(n_actions))
        .map(|(qs, ps)| qs.iter().zip(ps).map(|(q, p)| p * q - alpha * entropy_term(*p)).sum())
        .collect()
}

/// One application of the soft Bellman backup to `q`.
pub fn soft_backup(mdp: &FiniteMdp, q: &[f64], policy: &[f64], alpha: f64, gamma: f64) -> Vec<f64> {
    let v = soft_value(q, policy, mdp.n_actions, alpha);
    let mut out = Vec::with_capacity(q.len());
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let ev: f64 = mdp.p(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
            out.push(mdp.reward[s * mdp.n_actions + a] + gamma * ev);
        }
    }
    out
}

/// Exact soft Q-function of `policy`.
pub fn soft_policy_evaluation(mdp: &FiniteMdp, policy: &[f64], alpha: f64, gamma: f64) -> Vec<f64> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut a_mat = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let pi = policy[s * na + a];
            rhs[s] += pi * mdp.reward[s * na + a] - alpha * entropy_term(pi);
            for (sp, p) in mdp.p(s, a).iter().enumerate() {
                a_mat[(s, sp)] -= gamma * pi * p;
            }
        }
    }
    let v = a_mat.lu().solve(&rhs).expect("I − γP_π is nonsingular for γ < 1");
    let mut q = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let ev: f64 = mdp.p(s, a).iter().zip(v.iter()).map(|(p, v)| p * v).sum();
            q.push(mdp.reward[s * na + a] + gamma * ev);
        }
    }
    q
}

/// `π(a|s) ∝ exp(Q(s,a)/α)`.
pub fn soft_policy_improvement(q: &[f64], n_actions: usize, alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(q.len());
    for qs in q.chunks_exact(n_actions) {
        let m = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = qs.iter().map(|q| ((q - m) / alpha).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / z));
    }
    out
}

#[derive(Clone, Debug)]
pub struct SoftPiResult {
    pub q: Vec<f64>,
    pub policy: Vec<f64>,
    pub iterations: usize,
    /// Smallest `Q^{π_i} − Q^{π_{i−1}}` over all pairs and iterations.
    pub min_improvement: f64,
    pub converged: bool,
}

/// Alternates exact evaluation and improvement until `Q` moves less than
/// `tol` in max-norm.
pub fn tabular_soft_policy_iteration(
    mdp: &FiniteMdp,
    alpha: f64,
    gamma: f64,
    init_policy: &[f64],
    max_iter: usize,
    tol: f64,
) -> SoftPiResult {
    assert!(alpha > 0.0 && (0.0..1.0).contains(&gamma));
    let mut policy = init_policy.to_vec();
    let mut q = soft_policy_evaluation(mdp, &policy, alpha, gamma);
    let mut min_improvement = f64::INFINITY;
    for it in 1..=max_iter {
        policy = soft_policy_improvement(&q, mdp.n_actions, alpha);
        let next = soft_policy_evaluation(mdp, &policy, alpha, gamma);
        let mut delta: f64 = 0.0;
        for (n, o) in next.iter().zip(&q) {
            min_improvement = min_improvement.min(n - o);
            delta = delta.max((n - o).abs());
        }
        q = next;
        if delta < tol {
            return SoftPiResult { q, policy, iterations: it, min_improvement, converged: true };
        }
    }
    SoftPiResult { q, policy, iterations: max_iter, min_improvement, converged: false }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct OracleReport {
    pub mdps: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Smallest per-iteration change of any Q entry across all runs.
    pub min_improvement: f64,
    /// Largest gap between the limits reached from two initial policies.
    pub max_limit_gap: f64,
    pub all_converged: bool,
}

/// Soft policy iteration on `mdps` random MDPs (2..=10 states, 2..=4
/// actions), each started from the uniform policy and from a random one.
pub fn run_oracle<R: Rng + ?Sized>(rng: &mut R, mdps: usize, alpha: f64, gamma: f64) -> OracleReport {
    let mut report = OracleReport {
        mdps,
        alpha,
        gamma,
        min_improvement: f64::INFINITY,
        max_limit_gap: 0.0,
        all_converged: true,
    };
    for _ in 0..mdps {
        let ns = rng.random_range(2..=10);
        let na = rng.random_range(2..=4);
        let mdp = FiniteMdp::random(rng, ns, na);
        let logits: Vec<f64> = (0..ns * na).map(|_| rng.random_range(-5.0..0.0)).collect();
        let skewed = soft_policy_improvement(&logits, na, 0.2);
        let a = tabular_soft_policy_iteration(&mdp, alpha, gamma, &mdp.uniform_policy(), 1000, 1e-13);
        let b = tabular_soft_policy_iteration(&mdp, alpha, gamma, &skewed, 1000, 1e-13);
        report.all_converged &= a.converged && b.converged;
        report.min_improvement = report.min_improvement.min(a.min_improvement).min(b.min_improvement);
        for (x, y) in a.q.iter().zip(&b.q) {
            report.max_limit_gap = report.max_limit_gap.max((x - y).abs());
        }
    }
    report
}
