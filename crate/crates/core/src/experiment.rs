//! Evaluation rollouts, metrics, and the on-disk artifacts (CSV logs,
//! manifests, checkpoints).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Scenario, TrainConfig};
use crate::dynamics::VesselState;
use crate::env::{ControlMode, EnvConfig, PlantKind, StepRecord, TrackingEnv};
use crate::error::{Error, Result};
use crate::sac::Agent;
use crate::train::EpisodeLog;

/// Summary of one evaluation log. Errors `e_x`, `e_y` are taken against the
/// reference trajectory; the `model_` fields use the nominal model instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: usize,
    pub finished: bool,
    pub bounded: bool,
    pub mean_abs_ex: f64,
    pub max_abs_ex: f64,
    pub mean_abs_ey: f64,
    pub max_abs_ey: f64,
    pub mean_distance: f64,
    pub max_distance: f64,
    pub final_distance: f64,
    pub mean_model_distance: f64,
    pub max_model_distance: f64,
}

/// `finished` tells whether the rollout ran its full length; `bounded`
/// additionally requires the distance error to stay within `bound`.
pub fn compute_metrics(log: &[StepRecord], finished: bool, bound: f64) -> Result<Metrics> {
    if log.is_empty() {
        return Err(Error::config("log", "cannot summarize an empty log"));
    }
    let n = log.len() as f64;
    let mut m = Metrics {
        steps: log.len(),
        finished,
        bounded: false,
        mean_abs_ex: 0.0,
        max_abs_ex: 0.0,
        mean_abs_ey: 0.0,
        max_abs_ey: 0.0,
        mean_distance: 0.0,
        max_distance: 0.0,
        final_distance: 0.0,
        mean_model_distance: 0.0,
        max_model_distance: 0.0,
    };
    for rec in log {
        let ex = (rec.x[0] - rec.x_r[0]).abs();
        let ey = (rec.x[1] - rec.x_r[1]).abs();
        let d = ex.hypot(ey);
        let dm = (rec.x[0] - rec.x_m[0]).hypot(rec.x[1] - rec.x_m[1]);
        m.mean_abs_ex += ex / n;
        m.mean_abs_ey += ey / n;
        m.mean_distance += d / n;
        m.mean_model_distance += dm / n;
        m.max_abs_ex = m.max_abs_ex.max(ex);
        m.max_abs_ey = m.max_abs_ey.max(ey);
        m.max_distance = m.max_distance.max(d);
        m.max_model_distance = m.max_model_distance.max(dm);
        m.final_distance = d;
    }
    let all_finite = m.mean_distance.is_finite() && m.max_distance.is_finite();
    m.bounded = finished && all_finite && m.max_distance <= bound;
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub mode: ControlMode,
    pub scenario: Scenario,
    pub plant: PlantKind,
    pub log: Vec<StepRecord>,
    pub metrics: Metrics,
}

/// Deterministic rollout using the actor mean. Stops early only if the state
/// becomes non-finite or exceeds the magnitude limit; the report then has
/// `finished = false`.
#[allow(clippy::too_many_arguments)]
pub fn run_evaluation(
    agent: Option<&Agent>,
    mode: ControlMode,
    env_config: &EnvConfig,
    scenario: Scenario,
    plant: PlantKind,
    steps: usize,
    init: &VesselState,
    bound: f64,
) -> Result<EvalReport> {
    if mode.learns() && agent.is_none() {
        return Err(Error::Checkpoint(format!("mode `{mode}` needs a trained policy")));
    }
    let mut env = TrackingEnv::new(env_config.clone(), mode, scenario.schedule(), plant)?;
    let mut s = env.reset(init);
    let mut log = Vec::with_capacity(steps);
    let mut finished = true;
    for _ in 0..steps {
        let u_l = match (mode.learns(), agent) {
            (true, Some(a)) => a.mean_action(&s),
            _ => [0.0; 3],
        };
        let out = env.step(u_l);
        log.push(out.record);
        match out.next_obs {
            Some(next) if !out.blown_up => s = next,
            _ => {
                finished = false;
                break;
            }
        }
    }
    let metrics = compute_metrics(&log, finished, bound)?;
    Ok(EvalReport { mode, scenario, plant, log, metrics })
}

/// Column names of the trajectory CSV.
pub fn trajectory_header() -> Vec<String> {
    let mut h: Vec<String> = ["t", "x", "y", "psi", "u", "v", "r"].iter().map(|s| s.to_string()).collect();
    h.extend((0..6).map(|i| format!("xm{i}")));
    h.extend((0..6).map(|i| format!("xr{i}")));
    h.extend((0..3).map(|i| format!("ub{i}")));
    h.extend((0..3).map(|i| format!("ul{i}")));
    h.push("reward".into());
    h
}

pub const LEARNING_CURVE_HEADER: [&str; 6] = ["episode", "steps", "return", "J_Q", "J_pi", "alpha"];

pub fn write_trajectory_csv(path: &Path, log: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_header())?;
    for rec in log {
        let mut row = Vec::with_capacity(26);
        row.push(rec.t);
        row.extend_from_slice(&rec.x);
        row.extend_from_slice(&rec.x_m);
        row.extend_from_slice(&rec.x_r);
        row.extend_from_slice(&rec.u_b);
        row.extend_from_slice(&rec.u_l);
        row.push(rec.reward);
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<StepRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != trajectory_header() {
        return Err(Error::ShapeMismatch {
            expected: trajectory_header().join(","),
            got: header.join(","),
        });
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let v: Vec<f64> = row
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::config("trajectory", format!("bad number `{f}`: {e}"))))
            .collect::<Result<_>>()?;
        let arr = |i: usize| -> [f64; 6] { std::array::from_fn(|k| v[i + k]) };
        out.push(StepRecord {
            t: v[0],
            x: arr(1),
            x_m: arr(7),
            x_r: arr(13),
            u_b: std::array::from_fn(|k| v[19 + k]),
            u_l: std::array::from_fn(|k| v[22 + k]),
            reward: v[25],
        });
    }
    Ok(out)
}

pub fn write_learning_curve_csv(path: &Path, log: &[EpisodeLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LEARNING_CURVE_HEADER)?;
    for e in log {
        w.write_record([
            e.episode.to_string(),
            e.steps.to_string(),
            e.ret.to_string(),
            e.j_q.to_string(),
            e.j_pi.to_string(),
            e.alpha.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Identity of a run. Equal manifests imply byte-identical outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub mode: ControlMode,
    pub code_version: String,
    /// Extra inputs such as the scenario or checkpoint digest.
    pub inputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, config: &TrainConfig) -> Self {
        Manifest {
            command: command.into(),
            config_sha256: config.digest(),
            seed: config.seed,
            mode: config.mode,
            code_version: env!("CARGO_PKG_VERSION").into(),
            inputs: Vec::new(),
        }
    }

    pub fn with_input(mut self, key: &str, value: impl Into<String>) -> Self {
        self.inputs.push((key.into(), value.into()));
        self
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    crate::config::hex(&Sha256::digest(bytes))
}

pub const CHECKPOINT_FORMAT: &str = "mrrl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub mode: ControlMode,
    pub config: TrainConfig,
    /// `None` for `baseline-only`.
    pub agent: Option<Agent>,
}

impl Checkpoint {
    pub fn new(config: &TrainConfig, agent: Option<Agent>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            mode: config.mode,
            config: config.clone(),
            agent,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format {} v{}", self.format, self.version)));
        }
        if self.mode.learns() != self.agent.is_some() {
            return Err(Error::Checkpoint(format!("mode `{}` does not match the stored networks", self.mode)));
        }
        if let Some(a) = &self.agent {
            if !a.is_finite() {
                return Err(Error::Checkpoint("non-finite parameters".into()));
            }
            let shapes_ok = a.actor.input_dim() == crate::sac::STATE_DIM
                && a.actor.output_dim() == 2 * crate::sac::ACTION_DIM
                && a.critics.iter().chain(&a.targets).all(|c| {
                    c.input_dim() == crate::sac::CRITIC_INPUT_DIM && c.output_dim() == 1 && c.sizes() == a.critics[0].sizes()
                });
            if !shapes_ok {
                return Err(Error::Checkpoint("network shapes do not match the agent layout".into()));
            }
        }
        self.config.validate()
    }
}
