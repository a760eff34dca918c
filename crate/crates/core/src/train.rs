//! Training loop: baseline data collection, critic pretraining, then
//! interleaved environment steps and gradient phases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{InitBox, TrainConfig};
use crate::dynamics::VesselState;
use crate::env::{ControlMode, PlantKind, TrackingEnv};
use crate::error::Error;
use crate::sac::{Agent, ReplayMemory, Transition};

/// Uniform draw from the initial-condition box with `v = r = 0`.
pub fn sample_initial_state<R: Rng + ?Sized>(rng: &mut R, b: &InitBox) -> VesselState {
    let x = rng.random_range(b.x[0]..b.x[1]);
    let y = rng.random_range(b.y[0]..b.y[1]);
    let psi = rng.random_range(b.psi[0]..b.psi[1]);
    let u = rng.random_range(b.u[0]..b.u[1]);
    VesselState::new([x, y, psi], [u, 0.0, 0.0])
}

/// One row of the learning curve.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub ret: f64,
    /// Mean critic loss over the episode's gradient phases (NaN if none ran).
    pub j_q: f64,
    pub j_pi: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub agent: Agent,
    pub log: Vec<EpisodeLog>,
    /// Final loss and number of updates of the critic pretraining.
    pub pretrain: Option<(f64, usize)>,
}

/// A run that hit a non-finite value. `last_good` is the agent as it was at
/// the end of the last completed episode.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub last_good: Option<Box<Agent>>,
    pub log: Vec<EpisodeLog>,
}

impl From<Error> for TrainAbort {
    fn from(error: Error) -> Self {
        TrainAbort { error, last_good: None, log: Vec::new() }
    }
}

/// Rolls out the plant under `u_b` alone and records transitions with
/// `u_l = 0`.
pub fn collect_d0<R: Rng + ?Sized>(
    env: &mut TrackingEnv,
    init_box: &InitBox,
    episodes: usize,
    steps: usize,
    capacity: usize,
    rng: &mut R,
) -> ReplayMemory {
    let mut memory = ReplayMemory::new(capacity);
    for _ in 0..episodes {
        let mut s = env.reset(&sample_initial_state(rng, init_box));
        for _ in 0..steps {
            let out = env.step([0.0; 3]);
            let Some(next) = out.next_obs else { break };
            let done = out.done();
            memory.push(Transition { s, u_l: [0.0; 3], r: out.record.reward, s_next: next, done });
            s = next;
            if done {
                break;
            }
        }
    }
    memory
}

/// Runs the full training loop for a learning mode.
///
/// In `combined` mode the replay memory is seeded with baseline-only data and
/// the critics are pretrained on it first. `rl-only` starts from scratch,
/// since baseline data does not describe its dynamics.
pub fn train(
    config: &TrainConfig,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> std::result::Result<TrainOutput, TrainAbort> {
    config.validate()?;
    if !config.mode.learns() {
        return Err(Error::config("mode", "baseline-only has nothing to train").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agent = Agent::new(config.sac.clone(), &mut rng)?;
    let schedule = config.training_scenario.schedule();
    let steps = config.steps_per_episode;

    let (mut memory, pretrain) = if config.mode == ControlMode::Combined && config.pretrain.d0_episodes > 0 {
        let mut base_env = TrackingEnv::new(config.env.clone(), ControlMode::BaselineOnly, schedule.clone(), PlantKind::True)?;
        let d0 = collect_d0(
            &mut base_env,
            &config.init_box,
            config.pretrain.d0_episodes,
            steps,
            config.sac.replay_capacity,
            &mut rng,
        );
        let stats = agent.pretrain_critics(&d0, config.pretrain.threshold, config.pretrain.max_iters, &mut rng)?;
        log::info!("critic pretraining: J_Q = {:.4e} after {} updates on {} transitions", stats.0, stats.1, d0.len());
        (d0, Some(stats))
    } else {
        (ReplayMemory::new(config.sac.replay_capacity), None)
    };

    let mut env = TrackingEnv::new(config.env.clone(), config.mode, schedule, PlantKind::True)?;
    let mut log = Vec::with_capacity(config.episodes);
    let mut last_good = agent.clone();
    for episode in 0..config.episodes {
        let mut s = env.reset(&sample_initial_state(&mut rng, &config.init_box));
        let (mut ret, mut taken) = (0.0, 0);
        let (mut jq_sum, mut jpi_sum, mut phases) = (0.0, 0.0, 0usize);
        for _ in 0..steps {
            let u_l = agent.sample_action(&s, &mut rng);
            let out = env.step(u_l);
            ret += out.record.reward;
            taken += 1;
            let Some(next) = out.next_obs else { break };
            let done = out.done();
            memory.push(Transition { s, u_l, r: out.record.reward, s_next: next, done });
            s = next;
            for _ in 0..config.gradient_steps_per_env_step {
                match agent.gradient_phase(&memory, &mut rng) {
                    Ok(Some(p)) => {
                        jq_sum += p.j_q;
                        jpi_sum += p.j_pi;
                        phases += 1;
                    }
                    Ok(None) => {}
                    Err(error) => {
                        return Err(TrainAbort { error, last_good: Some(Box::new(last_good)), log });
                    }
                }
            }
            if done {
                break;
            }
        }
        let entry = EpisodeLog {
            episode,
            steps: taken,
            ret,
            j_q: if phases > 0 { jq_sum / phases as f64 } else { f64::NAN },
            j_pi: if phases > 0 { jpi_sum / phases as f64 } else { f64::NAN },
            alpha: agent.alpha(),
        };
        on_episode(&entry);
        log.push(entry);
        last_good.clone_from(&agent);
    }
    Ok(TrainOutput { agent, log, pretrain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::planner::AccelSchedule;
    use crate::sac::SacConfig;

    fn small_config(mode: ControlMode) -> TrainConfig {
        TrainConfig {
            mode,
            episodes: 2,
            steps_per_episode: 60,
            sac: SacConfig { hidden: vec![16, 16], batch_size: 16, ..SacConfig::default() },
            pretrain: crate::config::PretrainConfig { max_iters: 20, ..Default::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn initial_states_stay_in_box() {
        let b = InitBox::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 10_000;
        let mut psi_sum = 0.0;
        for _ in 0..n {
            let s = sample_initial_state(&mut rng, &b);
            assert!(s.eta[0] >= b.x[0] && s.eta[0] < b.x[1]);
            assert!(s.eta[1] >= b.y[0] && s.eta[1] < b.y[1]);
            assert!(s.eta[2] >= b.psi[0] && s.eta[2] < b.psi[1]);
            assert!(s.nu[0] >= b.u[0] && s.nu[0] < b.u[1]);
            assert_eq!((s.nu[1], s.nu[2]), (0.0, 0.0));
            psi_sum += s.eta[2];
        }
        let se = (b.psi[1] - b.psi[0]) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((psi_sum / n as f64 - 0.25 * std::f64::consts::PI).abs() < 3.0 * se);
        let again = sample_initial_state(&mut ChaCha8Rng::seed_from_u64(0), &b);
        assert_eq!(again, sample_initial_state(&mut ChaCha8Rng::seed_from_u64(0), &b));
    }

    #[test]
    fn d0_is_baseline_only() {
        let mut env = TrackingEnv::new(EnvConfig::default(), ControlMode::BaselineOnly, AccelSchedule::eval1(), PlantKind::True).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d0 = collect_d0(&mut env, &InitBox::default(), 1, 1000, 10_000, &mut rng);
        assert_eq!(d0.len(), 1000);
        assert!(d0.iter().all(|t| t.u_l == [0.0; 3] && t.r <= 0.0 && !t.done));
    }

    #[test]
    fn short_run_is_reproducible() {
        let cfg = small_config(ControlMode::Combined);
        let a = train(&cfg, |_| {}).unwrap();
        let b = train(&cfg, |_| {}).unwrap();
        assert_eq!(a.log.len(), 2);
        assert_eq!(a.log, b.log);
        assert_eq!(a.agent, b.agent);
        assert!(a.log.iter().all(|e| e.ret.is_finite() && e.ret <= 0.0));
        assert!(a.pretrain.is_some());
    }

    #[test]
    fn rl_only_skips_pretraining() {
        let out = train(&small_config(ControlMode::RlOnly), |_| {}).unwrap();
        assert!(out.pretrain.is_none());
        assert_eq!(out.log.len(), 2);
    }

    #[test]
    fn baseline_only_is_rejected() {
        assert!(train(&small_config(ControlMode::BaselineOnly), |_| {}).is_err());
    }
}
