//! Closed-loop tracking environment.
//!
//! Each step holds `τ` for `dt` on the plant, advances the nominal model
//! under its own backstepping law, and advances the reference planner. The
//! agent observes `x_m ∥ x ∥ u_b`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_control, wrap_angle, BacksteppingGains};
use crate::dynamics::{HydroParams, NominalParams, NominalVessel, Plant, Rk4, TrueVessel, Vec3, Vec6, VesselState};
use crate::error::{Error, Result};
use crate::planner::{step_reference, AccelSchedule, ReferenceState};
use crate::sac::{reward, RewardWeights, ACTION_DIM, STATE_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// `τ = u_b + u_l`
    Combined,
    /// `τ = u_l`
    RlOnly,
    /// `τ = u_b`
    BaselineOnly,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::Combined => "combined",
            ControlMode::RlOnly => "rl-only",
            ControlMode::BaselineOnly => "baseline-only",
        }
    }

    pub fn learns(&self) -> bool {
        !matches!(self, ControlMode::BaselineOnly)
    }

    pub fn uses_baseline(&self) -> bool {
        !matches!(self, ControlMode::RlOnly)
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(ControlMode::Combined),
            "rl-only" => Ok(ControlMode::RlOnly),
            "baseline-only" => Ok(ControlMode::BaselineOnly),
            _ => Err(Error::config("mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// Which dynamics the controlled vessel follows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    #[default]
    True,
    Nominal,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum PlantModel {
    True(TrueVessel),
    Nominal(NominalVessel),
}

impl Plant for PlantModel {
    fn derivative(&self, x: &Vec6, tau: &Vec3) -> Vec6 {
        match self {
            PlantModel::True(p) => p.derivative(x, tau),
            PlantModel::Nominal(p) => p.derivative(x, tau),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub hydro: HydroParams,
    pub nominal: NominalParams,
    pub gains: BacksteppingGains,
    pub reward: RewardWeights,
    pub dt: f64,
    pub substep: f64,
    /// Episodes are cut once `‖x − x_m‖` exceeds this.
    pub max_deviation: f64,
    /// ... or once any state component exceeds this in magnitude.
    pub max_state: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            hydro: HydroParams::supply_ship(),
            nominal: NominalParams::default(),
            gains: BacksteppingGains::default(),
            reward: RewardWeights::default(),
            dt: 0.1,
            substep: 0.01,
            max_deviation: 50.0,
            max_state: 1e6,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.hydro.validate()?;
        self.nominal.validate()?;
        self.gains.validate()?;
        self.reward.validate()?;
        for (name, v) in [
            ("env.dt", self.dt),
            ("env.substep", self.substep),
            ("env.max_deviation", self.max_deviation),
            ("env.max_state", self.max_state),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, "must be finite and positive"));
            }
        }
        if self.substep > self.dt {
            return Err(Error::config("env.substep", "must not exceed dt"));
        }
        Ok(())
    }
}

/// Everything that happened during one control interval, stamped at its
/// start.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: [f64; 6],
    pub x_m: [f64; 6],
    pub x_r: [f64; 6],
    pub u_b: [f64; 3],
    pub u_l: [f64; 3],
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub record: StepRecord,
    /// `None` once integration produced a non-finite state.
    pub next_obs: Option<[f64; STATE_DIM]>,
    /// `‖x − x_m‖` above the deviation limit.
    pub deviated: bool,
    /// Non-finite state or a component above the magnitude limit.
    pub blown_up: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.deviated || self.blown_up
    }
}

#[derive(Clone)]
pub struct TrackingEnv {
    config: EnvConfig,
    mode: ControlMode,
    schedule: AccelSchedule,
    plant: PlantModel,
    model: NominalVessel,
    rk: Rk4,
    x: Vec6,
    x_m: Vec6,
    reference: ReferenceState,
    steps: usize,
    alive: bool,
}

impl TrackingEnv {
    pub fn new(config: EnvConfig, mode: ControlMode, schedule: AccelSchedule, plant: PlantKind) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        let plant = match plant {
            PlantKind::True => PlantModel::True(TrueVessel::new(config.hydro.clone())?),
            PlantKind::Nominal => PlantModel::Nominal(NominalVessel::new(config.nominal.clone())),
        };
        Ok(TrackingEnv {
            model: NominalVessel::new(config.nominal.clone()),
            rk: Rk4::new(config.substep),
            mode,
            schedule,
            plant,
            x: Vec6::zeros(),
            x_m: Vec6::zeros(),
            reference: ReferenceState::default(),
            steps: 0,
            alive: true,
            config,
        })
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn state(&self) -> VesselState {
        VesselState::from_vector(&self.x)
    }

    pub fn model_state(&self) -> VesselState {
        VesselState::from_vector(&self.x_m)
    }

    pub fn reference(&self) -> &ReferenceState {
        &self.reference
    }

    /// Starts a new episode from `x0`; the nominal model starts there too and
    /// the planner starts from its default state.
    pub fn reset(&mut self, x0: &VesselState) -> [f64; STATE_DIM] {
        self.x = x0.to_vector();
        self.x_m = self.x;
        self.reference = ReferenceState::default();
        self.steps = 0;
        self.alive = true;
        self.observation()
    }

    fn accel(&self) -> Vec3 {
        self.schedule.accel_at(self.reference.t)
    }

    /// Baseline control for the current plant state, zero in `rl-only` mode.
    pub fn baseline_action(&self) -> [f64; 3] {
        if !self.mode.uses_baseline() {
            return [0.0; 3];
        }
        let tau = baseline_control(&self.state(), &self.reference, &self.accel(), &self.config.nominal, &self.config.gains);
        [tau[0], tau[1], tau[2]]
    }

    /// `x_m ∥ x ∥ u_b`. Headings are reported in `(−π, π]` for the model and
    /// as the model heading plus the wrapped difference for the plant, so the
    /// observation does not grow with the number of turns made.
    pub fn observation(&self) -> [f64; STATE_DIM] {
        let mut s = [0.0; STATE_DIM];
        s[..6].copy_from_slice(self.x_m.as_slice());
        s[6..12].copy_from_slice(self.x.as_slice());
        let psi_m = wrap_angle(self.x_m[2]);
        s[2] = psi_m;
        s[8] = psi_m + wrap_angle(self.x[2] - self.x_m[2]);
        s[12..].copy_from_slice(&self.baseline_action());
        s
    }

    /// Applies `u_l` (ignored in `baseline-only` mode) for one interval.
    pub fn step(&mut self, u_l: [f64; ACTION_DIM]) -> StepOutcome {
        assert!(self.alive, "step called after the state became non-finite");
        let u_l = if self.mode.learns() { u_l } else { [0.0; 3] };
        let a_r = self.accel();
        let u_b = self.baseline_action();
        let tau = Vec3::new(u_b[0] + u_l[0], u_b[1] + u_l[1], u_b[2] + u_l[2]);
        let x_arr: [f64; 6] = self.x.into();
        let x_m_arr: [f64; 6] = self.x_m.into();
        let record = StepRecord {
            t: self.time(),
            x: x_arr,
            x_m: x_m_arr,
            x_r: self.reference.to_array(),
            u_b,
            u_l,
            reward: reward(&x_arr, &x_m_arr, &u_l, &self.config.reward),
        };

        let tau_m = baseline_control(&self.model_state(), &self.reference, &a_r, &self.config.nominal, &self.config.gains);
        let dt = self.config.dt;
        let next = self.rk.step(&self.plant, &self.x, &tau, dt);
        let next_m = self.rk.step(&self.model, &self.x_m, &tau_m, dt);
        self.reference = step_reference(&self.reference, &self.schedule, &self.rk, dt);
        self.steps += 1;

        match (next, next_m) {
            (Ok(x), Ok(x_m)) => {
                self.x = x;
                self.x_m = x_m;
                let blown_up = x.iter().chain(x_m.iter()).any(|v| v.abs() > self.config.max_state);
                let mut diff = x - x_m;
                diff[2] = wrap_angle(diff[2]);
                let deviated = diff.norm() > self.config.max_deviation;
                StepOutcome {
                    record,
                    next_obs: Some(self.observation()),
                    deviated,
                    blown_up,
                }
            }
            _ => {
                self.alive = false;
                StepOutcome {
                    record,
                    next_obs: None,
                    deviated: false,
                    blown_up: true,
                }
            }
        }
    }
}
