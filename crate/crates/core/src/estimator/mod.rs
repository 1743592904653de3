//! Signed margins for the differential Harnack, gradient and convexity
//! estimates, in pointwise form and in duality form against adjoint runs.
//!
//! Every margin is `rhs − lhs` of an inequality, so a nonnegative value means
//! the estimate holds; a check passes when `value ≥ −tolerance`.

mod convexity;
mod integral;
mod pointwise;
mod tolerance;

use serde::{Deserialize, Serialize};

use crate::calculus::{gradient, hessian, hopf_cole, laplacian, min_max_eigenvalue};
use crate::error::{Error, Result};
use crate::fields::{ScalarField, Trajectory};

pub use convexity::{check_convexity_preservation, check_k0k, ConvexityMode, PotentialConstants};
pub use integral::{
    check_crossed_term, check_integral_hessian, check_second_order_bernstein, IntegralHessian,
};
pub use pointwise::{
    check_hamilton, check_hsz_gradient, check_li_yau, check_lp_smoothing,
    check_oscillation_gradient, check_reversed,
};
pub use tolerance::{CalibrationTable, Tolerances};

/// Signed slack of one inequality at one elapsed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    /// Elapsed time since the initial datum.
    pub tau: f64,
    /// Absolute solver time of the evaluated field.
    pub time: f64,
    pub value: f64,
    /// Worst node (lowest index on ties); `None` for global quantities.
    pub node: Option<usize>,
    /// Left-hand side of the inequality at the worst location.
    pub worst_value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Margin {
    pub fn new(
        name: impl Into<String>,
        tau: f64,
        time: f64,
        value: f64,
        node: Option<usize>,
        worst_value: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            name: name.into(),
            tau,
            time,
            value,
            node,
            worst_value,
            tolerance,
            passed: value >= -tolerance,
        }
    }

    /// Re-evaluates `passed` under another tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.passed = self.value >= -tolerance;
        self
    }
}

/// Keeps the smallest margin; earlier entries win ties.
pub fn worst_of(margins: impl IntoIterator<Item = Margin>) -> Option<Margin> {
    margins.into_iter().fold(None, |acc, m| match acc {
        Some(a) if !(m.value < a.value) => Some(a),
        _ => Some(m),
    })
}

/// Inputs shared by all checks at one elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateParams {
    pub tau: f64,
    /// Certified sup of `u` over every stored field.
    pub a_bound: f64,
    pub delta: f64,
    /// Exponent for the `L^p` checks.
    pub p: f64,
    /// `max(0, −min λ_min(D² log(u(0)+δ)))`
    pub c0_lower: f64,
    /// `max(0, max λ_max(D² log(u(0)+δ)))`
    pub c0_upper: f64,
    /// `max(0, −min Δ log(u(0)+δ))`
    pub c_lap: f64,
    /// `max |D log(u(0)+δ)|`
    pub k0: f64,
    pub tolerances: Tolerances,
}

impl EstimateParams {
    /// Certifies `A`, `c₀` and `K₀` on the grid from the stored trajectory.
    pub fn certify(
        traj: &Trajectory,
        tau: f64,
        delta: f64,
        p: f64,
        tolerances: Tolerances,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParams(format!(
                "elapsed time must be positive, got {tau}"
            )));
        }
        let v0 = hopf_cole(traj.initial(), delta)?;
        let (lmin, lmax) = min_max_eigenvalue(&hessian(&v0)?)?;
        let lap = laplacian(&v0)?;
        Ok(Self {
            tau,
            a_bound: traj.sup(),
            delta,
            p,
            c0_lower: (-lmin.min()).max(0.0),
            c0_upper: lmax.max().max(0.0),
            c_lap: (-lap.min()).max(0.0),
            k0: gradient(&v0)?.magnitude().max(),
            tolerances,
        })
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self {
            tau,
            ..self.clone()
        }
    }

    pub fn with_p(&self, p: f64) -> Self {
        Self {
            p,
            ..self.clone()
        }
    }

    /// Absolute time of the checkpoint this parameter set refers to.
    pub(crate) fn checkpoint(&self, traj: &Trajectory) -> f64 {
        traj.t0() + self.tau
    }

    pub(crate) fn field_at<'a>(&self, traj: &'a Trajectory) -> Result<&'a ScalarField> {
        traj.at(self.checkpoint(traj))
    }

    pub(crate) fn tol(&self, name: &str, family: &str) -> f64 {
        self.tolerances.for_check(name, family)
    }
}

/// Rejects a trajectory that exceeds the declared sup bound anywhere.
pub(crate) fn ensure_sup_bound(traj: &Trajectory, a: f64) -> Result<()> {
    for f in traj.fields() {
        let (m, _) = f.max_with_index();
        if m > a {
            return Err(Error::SupBoundViolated {
                value: m,
                time: f.time(),
                bound: a,
            });
        }
    }
    Ok(())
}

/// Names accepted in an estimate selection.
pub const ESTIMATE_NAMES: [&str; 9] = [
    "li_yau",
    "hamilton",
    "hsz_gradient",
    "oscillation_gradient",
    "lp_smoothing",
    "reversed",
    "crossed_term",
    "integral_hessian",
    "convexity",
];

/// Pointwise evaluation of `v = log(u+δ)` and derived fields at `t`; the
/// quantities a plot dump needs.
#[derive(Debug, Clone)]
pub struct LogFields {
    pub u: ScalarField,
    pub v: ScalarField,
    pub grad_sq: ScalarField,
    pub lap: ScalarField,
    pub lambda_min: ScalarField,
    pub lambda_max: ScalarField,
}

impl LogFields {
    pub fn new(u: &ScalarField, delta: f64) -> Result<Self> {
        let v = hopf_cole(u, delta)?;
        let grad_sq = gradient(&v)?.norm_sq();
        let h = hessian(&v)?;
        let lap = h.trace();
        let (lambda_min, lambda_max) = min_max_eigenvalue(&h)?;
        Ok(Self {
            u: u.clone(),
            v,
            grad_sq,
            lap,
            lambda_min,
            lambda_max,
        })
    }
}
