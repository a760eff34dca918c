pub mod baseline;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod nn;
pub mod planner;
pub mod sac;
pub mod train;

pub use error::{Error, Result};
pub use config::{Scenario, TrainConfig};
pub use dynamics::{Vec3, Vec6, VesselState};
pub use env::{ControlMode, EnvConfig, TrackingEnv};
pub use experiment::{Checkpoint, EvalReport, Metrics};
pub use sac::{Agent, SacConfig};
