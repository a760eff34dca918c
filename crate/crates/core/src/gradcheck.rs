//! Central-difference check of the critic, actor and temperature gradients
//! on small random networks.
//!
//! ReLU networks are only piecewise smooth, so a parameter is skipped when
//! either perturbed evaluation changes the activation pattern of any hidden
//! unit; the difference quotient straddles a kink there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::nn::Mlp;
use crate::sac::{
    actor_loss, actor_loss_grad, critic_input, critic_loss, critic_loss_grad, draw_noise, policy_actions,
    temperature_grad, temperature_loss, Agent, PolicyHead, SacConfig, ACTION_DIM, STATE_DIM,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seeds: usize,
    pub critic_max_rel: f64,
    pub actor_max_rel: f64,
    pub alpha_max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl GradcheckReport {
    pub fn max_rel(&self) -> f64 {
        self.critic_max_rel.max(self.actor_max_rel).max(self.alpha_max_rel)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn pattern(net: &Mlp, input: &[f64]) -> Vec<bool> {
    let n = input.len() / net.input_dim();
    let acts = net.forward_batch(input, n);
    let hidden = &acts.values[1..acts.values.len() - 1];
    hidden.iter().flat_map(|v| v.iter().map(|a| *a > 0.0)).collect()
}

struct Tally {
    max_rel: f64,
    checked: usize,
    skipped: usize,
}

impl Tally {
    fn new() -> Self {
        Tally { max_rel: 0.0, checked: 0, skipped: 0 }
    }
}

/// Differences every parameter of `net`; `eval` returns the loss and the
/// activation pattern for a perturbed copy.
fn check_params(net: &Mlp, analytic: &Mlp, h: f64, tally: &mut Tally, eval: impl Fn(&Mlp) -> (f64, Vec<bool>)) {
    let base = eval(net).1;
    for (idx, a) in analytic.params().enumerate() {
        let mut plus = net.clone();
        *plus.param_mut(idx) += h;
        let mut minus = net.clone();
        *minus.param_mut(idx) -= h;
        let (lp, pp) = eval(&plus);
        let (lm, pm) = eval(&minus);
        if pp != base || pm != base {
            tally.skipped += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        tally.max_rel = tally.max_rel.max(relative_error(*a, fd));
        tally.checked += 1;
    }
}

/// Checks all three gradients for each seed on `15 → hidden → out`
/// networks with a batch of `batch` random transitions.
pub fn run_gradcheck(seeds: std::ops::Range<u64>, hidden: &[usize], batch: usize, h: f64) -> GradcheckReport {
    let (mut critic, mut actor, mut alpha) = (Tally::new(), Tally::new(), Tally::new());
    let n_seeds = seeds.end.saturating_sub(seeds.start) as usize;
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SacConfig {
            hidden: hidden.to_vec(),
            actor_output_init_scale: 1.0,
            init_alpha: rng.random_range(0.05..0.5),
            action_bound: if seed % 2 == 0 { SacConfig::default().action_bound } else { None },
            ..SacConfig::default()
        };
        let agent = Agent::new(cfg, &mut rng).expect("valid gradcheck config");
        let head: PolicyHead = agent.head();
        let s: Vec<f64> = (0..batch * STATE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..batch * ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..batch).map(|_| rng.random_range(-2.0..0.0)).collect();
        let xi = draw_noise(&mut rng, batch * ACTION_DIM);

        let input = critic_input(&s, &u, batch);
        for c in &agent.critics {
            let (_, g) = critic_loss_grad(c, &input, &y);
            check_params(c, &g, h, &mut critic, |net| (critic_loss(net, &input, &y), pattern(net, &input)));
        }

        let a = agent.alpha();
        let q1 = &agent.critics[0];
        let eval = actor_loss_grad(&agent.actor, q1, &head, a, &s, &xi);
        check_params(&agent.actor, &eval.grad, h, &mut actor, |net| {
            let ua = policy_actions(net, &head, &s, &xi);
            let mut p = pattern(net, &s);
            p.extend(pattern(q1, &critic_input(&s, &ua, batch)));
            (actor_loss(net, q1, &head, a, &s, &xi).0, p)
        });

        let target = agent.config.target_entropy;
        let g = temperature_grad(agent.log_alpha, eval.mean_log_pi, target);
        let fd = (temperature_loss(agent.log_alpha + h, eval.mean_log_pi, target)
            - temperature_loss(agent.log_alpha - h, eval.mean_log_pi, target))
            / (2.0 * h);
        alpha.max_rel = alpha.max_rel.max(relative_error(g, fd));
        alpha.checked += 1;
    }
    GradcheckReport {
        seeds: n_seeds,
        critic_max_rel: critic.max_rel,
        actor_max_rel: actor.max_rel,
        alpha_max_rel: alpha.max_rel,
        checked: critic.checked + actor.checked + alpha.checked,
        skipped: critic.skipped + actor.skipped + alpha.skipped,
    }
}
