//! Reference trajectory generator: `η̇_r = R(ψ_r)ν_r`, `ν̇_r = a_r(t)` with a
//! piecewise-constant acceleration schedule.

use std::f64::consts::PI;

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_substep, rotation_matrix, Rk4, Vec3};
use crate::error::{Error, Result};

/// Constant surge/yaw acceleration on the half-open window `[t_start, t_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub u_dot: f64,
    pub r_dot: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelSchedule {
    pub segments: Vec<AccelSegment>,
}

impl AccelSchedule {
    pub fn new(segments: Vec<AccelSegment>) -> Result<Self> {
        let s = AccelSchedule { segments };
        s.validate()?;
        Ok(s)
    }

    pub fn zero() -> Self {
        AccelSchedule { segments: Vec::new() }
    }

    /// Surge ramp for 20 s, then a yaw-rate ramp between 25 s and 50 s.
    pub fn eval1() -> Self {
        AccelSchedule {
            segments: vec![
                AccelSegment { t_start: 0.0, t_end: 20.0, u_dot: 0.005, r_dot: 0.0 },
                AccelSegment { t_start: 25.0, t_end: 50.0, u_dot: 0.0, r_dot: PI / 600.0 },
            ],
        }
    }

    /// `eval1` plus a reversed yaw ramp between 125 s and 150 s.
    pub fn eval2() -> Self {
        let mut s = Self::eval1();
        s.segments.push(AccelSegment {
            t_start: 125.0,
            t_end: 150.0,
            u_dot: 0.0,
            r_dot: -PI / 600.0,
        });
        s
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "eval1" => Some(Self::eval1()),
            "eval2" => Some(Self::eval2()),
            "zero" => Some(Self::zero()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_end = f64::NEG_INFINITY;
        for (i, s) in self.segments.iter().enumerate() {
            let field = || format!("schedule.segments[{i}]");
            if ![s.t_start, s.t_end, s.u_dot, s.r_dot].iter().all(|v| v.is_finite()) {
                return Err(Error::config(field(), "values must be finite"));
            }
            if s.t_end <= s.t_start {
                return Err(Error::config(field(), "t_end must exceed t_start"));
            }
            if s.t_start < prev_end {
                return Err(Error::config(field(), "segments must be ordered and non-overlapping"));
            }
            prev_end = s.t_end;
        }
        Ok(())
    }

    /// `a_r(t) = [u̇_r, 0, ṙ_r]`; zero outside every segment.
    pub fn accel_at(&self, t: f64) -> Vec3 {
        self.segments
            .iter()
            .find(|s| s.t_start <= t && t < s.t_end)
            .map(|s| Vec3::new(s.u_dot, 0.0, s.r_dot))
            .unwrap_or_else(Vec3::zeros)
    }

    /// Largest acceleration magnitude over the schedule.
    pub fn max_abs(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.u_dot.abs().max(s.r_dot.abs()))
            .fold(0.0, f64::max)
    }
}

/// Planner state. Sway velocity is identically zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceState {
    pub eta: Vec3,
    pub u: f64,
    pub r: f64,
    pub t: f64,
}

impl ReferenceState {
    pub fn new(eta: [f64; 3], u: f64, r: f64) -> Self {
        ReferenceState { eta: Vec3::from(eta), u, r, t: 0.0 }
    }

    pub fn nu(&self) -> Vec3 {
        Vec3::new(self.u, 0.0, self.r)
    }

    /// `η̇_r = R(ψ_r)ν_r`.
    pub fn eta_dot(&self) -> Vec3 {
        rotation_matrix(self.eta[2]) * self.nu()
    }

    /// `[x_r, y_r, ψ_r, u_r, 0, r_r]`.
    pub fn to_array(&self) -> [f64; 6] {
        [self.eta[0], self.eta[1], self.eta[2], self.u, 0.0, self.r]
    }
}

impl Default for ReferenceState {
    fn default() -> Self {
        ReferenceState::new([0.0, 0.0, PI / 4.0], 0.4, 0.0)
    }
}

/// Advances the planner by `dt` using the same RK4 substep policy as the
/// vessel models. The acceleration is sampled at each substep midpoint, so
/// schedule switches that fall on the substep grid are resolved exactly.
pub fn step_reference(
    reference: &ReferenceState,
    schedule: &AccelSchedule,
    rk: &Rk4,
    dt: f64,
) -> ReferenceState {
    assert!(dt > 0.0, "dt must be positive");
    let (n, h) = rk.partition(dt);
    // [x, y, psi, u, r]
    let mut z = SVector::<f64, 5>::new(
        reference.eta[0],
        reference.eta[1],
        reference.eta[2],
        reference.u,
        reference.r,
    );
    for i in 0..n {
        let a = schedule.accel_at(reference.t + (i as f64 + 0.5) * h);
        let f = |s: &SVector<f64, 5>| {
            let (sin, cos) = s[2].sin_cos();
            SVector::<f64, 5>::new(cos * s[3], sin * s[3], s[4], a[0], a[2])
        };
        z = rk4_substep(&f, &z, h);
    }
    ReferenceState {
        eta: Vec3::new(z[0], z[1], z[2]),
        u: z[3],
        r: z[4],
        t: reference.t + dt,
    }
}
