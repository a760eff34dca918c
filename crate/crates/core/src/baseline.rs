//! Backstepping tracking law designed on the linear nominal model.
//!
//! With `e_η = η − η_r` (heading wrapped), the virtual velocity is
//! `ν_d = Rᵀ(ψ)(η̇_r − K_η e_η)` and the velocity error `e_ν = ν − ν_d`. The
//! control
//!
//! ```text
//! τ_b = M_m (ν̇_d − K_ν e_ν) + D_m ν_d − Rᵀ(ψ) e_η
//! ```
//!
//! makes `V = ½|e_η|² + ½ e_νᵀ M_m e_ν` strictly decreasing on the nominal
//! plant. `ν̇_d` is differentiated analytically along the measured motion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{rotation_matrix, rotation_matrix_dpsi, NominalParams, Vec3, VesselState};
use crate::error::{Error, Result};
use crate::planner::ReferenceState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacksteppingGains {
    pub k_eta: [f64; 3],
    pub k_nu: [f64; 3],
}

impl Default for BacksteppingGains {
    fn default() -> Self {
        BacksteppingGains {
            k_eta: [0.5; 3],
            k_nu: [2.0; 3],
        }
    }
}

impl BacksteppingGains {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("gains.k_eta", &self.k_eta), ("gains.k_nu", &self.k_nu)] {
            if g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::config(name, "gains must be finite and strictly positive"));
            }
        }
        Ok(())
    }
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Position error `η − η_r` with the heading component wrapped.
pub fn tracking_error(x: &VesselState, reference: &ReferenceState) -> Vec3 {
    let mut e = x.eta - reference.eta;
    e[2] = wrap_angle(e[2]);
    e
}

/// Intermediate signals of the backstepping law.
#[derive(Clone, Copy, Debug)]
pub struct BacksteppingTerms {
    pub e_eta: Vec3,
    pub nu_d: Vec3,
    pub nu_d_dot: Vec3,
    pub e_nu: Vec3,
    pub tau: Vec3,
}

pub fn backstepping_terms(
    x: &VesselState,
    reference: &ReferenceState,
    a_r: &Vec3,
    np: &NominalParams,
    gains: &BacksteppingGains,
) -> BacksteppingTerms {
    let k_eta = Vec3::from(gains.k_eta);
    let k_nu = Vec3::from(gains.k_nu);
    let psi = x.eta[2];
    let rot = rotation_matrix(psi);
    let rot_t = rot.transpose();

    let ref_rot = rotation_matrix(reference.eta[2]);
    let nu_r = reference.nu();
    let eta_r_dot = ref_rot * nu_r;
    let eta_r_ddot = rotation_matrix_dpsi(reference.eta[2]) * nu_r * reference.r + ref_rot * a_r;

    let e_eta = tracking_error(x, reference);
    let w = eta_r_dot - k_eta.component_mul(&e_eta);
    let nu_d = rot_t * w;
    let e_nu = x.nu - nu_d;

    let e_eta_dot = rot * x.nu - eta_r_dot;
    let w_dot = eta_r_ddot - k_eta.component_mul(&e_eta_dot);
    let nu_d_dot = rotation_matrix_dpsi(psi).transpose() * w * x.nu[2] + rot_t * w_dot;

    let m = np.inertia_vec();
    let d = np.damping_vec();
    let tau = m.component_mul(&(nu_d_dot - k_nu.component_mul(&e_nu))) + d.component_mul(&nu_d)
        - rot_t * e_eta;

    BacksteppingTerms {
        e_eta,
        nu_d,
        nu_d_dot,
        e_nu,
        tau,
    }
}

/// Baseline control `τ_b` for the vessel at `x` tracking `reference`.
pub fn baseline_control(
    x: &VesselState,
    reference: &ReferenceState,
    a_r: &Vec3,
    np: &NominalParams,
    gains: &BacksteppingGains,
) -> Vec3 {
    backstepping_terms(x, reference, a_r, np, gains).tau
}
