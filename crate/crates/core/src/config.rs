//! Experiment configuration. Every field has a default, so a config file only
//! needs to list what it changes.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{ControlMode, EnvConfig};
use crate::error::{Error, Result};
use crate::planner::AccelSchedule;
use crate::sac::SacConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Eval1,
    Eval2,
}

impl Scenario {
    pub fn schedule(&self) -> AccelSchedule {
        match self {
            Scenario::Eval1 => AccelSchedule::eval1(),
            Scenario::Eval2 => AccelSchedule::eval2(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Eval1 => "eval1",
            Scenario::Eval2 => "eval2",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eval1" => Ok(Scenario::Eval1),
            "eval2" => Ok(Scenario::Eval2),
            _ => Err(Error::config("scenario", format!("unknown scenario `{s}`"))),
        }
    }
}

/// Ranges for the random initial state; `v` and `r` always start at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub psi: [f64; 2],
    pub u: [f64; 2],
}

impl Default for InitBox {
    fn default() -> Self {
        InitBox {
            x: [-1.5, 1.5],
            y: [-1.5, 1.5],
            psi: [0.1 * PI, 0.4 * PI],
            u: [0.2, 0.4],
        }
    }
}

impl InitBox {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("init_box.x", self.x), ("init_box.y", self.y), ("init_box.psi", self.psi), ("init_box.u", self.u)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::config(name, "needs finite bounds with low < high"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Baseline-only episodes collected before learning starts.
    pub d0_episodes: usize,
    pub threshold: f64,
    pub max_iters: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            d0_episodes: 1,
            threshold: 1e-2,
            max_iters: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub duration: f64,
    pub init: [f64; 6],
    /// A run counts as bounded if the distance error never exceeds this.
    pub bound: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            duration: 200.0,
            init: [1.0, 1.0, 0.25 * PI, 0.3, 0.0, 0.0],
            bound: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: ControlMode,
    pub seed: u64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub gradient_steps_per_env_step: usize,
    pub training_scenario: Scenario,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub init_box: InitBox,
    pub pretrain: PretrainConfig,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: ControlMode::Combined,
            seed: 0,
            episodes: 1001,
            steps_per_episode: 1000,
            gradient_steps_per_env_step: 1,
            training_scenario: Scenario::Eval1,
            env: EnvConfig::default(),
            sac: SacConfig::default(),
            init_box: InitBox::default(),
            pretrain: PretrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sac.validate()?;
        self.init_box.validate()?;
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if self.steps_per_episode == 0 {
            return Err(Error::config("steps_per_episode", "must be at least 1"));
        }
        if self.gradient_steps_per_env_step == 0 {
            return Err(Error::config("gradient_steps_per_env_step", "must be at least 1"));
        }
        if self.pretrain.max_iters == 0 {
            return Err(Error::config("pretrain.max_iters", "must be at least 1"));
        }
        if self.pretrain.threshold.is_nan() || self.pretrain.threshold <= 0.0 {
            return Err(Error::config("pretrain.threshold", "must be positive"));
        }
        if !(self.eval.duration.is_finite() && self.eval.duration > 0.0) {
            return Err(Error::config("eval.duration", "must be finite and positive"));
        }
        if !(self.eval.bound.is_finite() && self.eval.bound > 0.0) {
            return Err(Error::config("eval.bound", "must be finite and positive"));
        }
        if self.eval.init.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("eval.init", "must be finite"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config is always serializable");
        hex(&Sha256::digest(&bytes))
    }

    /// Control steps in one evaluation run.
    pub fn eval_steps(&self) -> usize {
        (self.eval.duration / self.env.dt).round() as usize
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
