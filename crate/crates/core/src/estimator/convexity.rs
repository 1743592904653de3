use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adjoint::AdjointRun;
use crate::calculus::{gradient, hessian, hopf_cole};
use crate::error::{Error, Result};
use crate::fields::Trajectory;
use crate::grid::Grid;
use crate::potential::{PotentialIntegrals, PotentialSpec};

use super::integral::{aligned, space_time_integral};
use super::{EstimateParams, LogFields, Margin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityMode {
    Convex,
    Concave,
    TwoSided,
    PotentialA,
    PotentialB,
    PotentialC,
}

impl ConvexityMode {
    pub const ALL: [ConvexityMode; 6] = [
        ConvexityMode::Convex,
        ConvexityMode::Concave,
        ConvexityMode::TwoSided,
        ConvexityMode::PotentialA,
        ConvexityMode::PotentialB,
        ConvexityMode::PotentialC,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConvexityMode::Convex => "convex",
            ConvexityMode::Concave => "concave",
            ConvexityMode::TwoSided => "two_sided",
            ConvexityMode::PotentialA => "potential_a",
            ConvexityMode::PotentialB => "potential_b",
            ConvexityMode::PotentialC => "potential_c",
        }
    }

    pub fn needs_potential_constants(self) -> bool {
        matches!(
            self,
            ConvexityMode::PotentialA | ConvexityMode::PotentialB | ConvexityMode::PotentialC
        )
    }
}

impl FromStr for ConvexityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.as_str()).collect();
                Error::validation(
                    "convexity_modes",
                    format!("unknown mode `{s}`; valid modes: {}", names.join(", ")),
                )
            })
    }
}

/// Potential-dependent constants certified on the grid over `[t0, t0 + τ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialConstants {
    pub integrals: PotentialIntegrals,
    /// Sup of `|D log(u+δ)|` over the stored trajectory up to `t0 + τ`.
    pub k: f64,
}

impl PotentialConstants {
    /// `times` are the absolute solver times spanning `[t0, t0 + τ]`.
    pub fn certify(
        traj: &Trajectory,
        potential: &PotentialSpec,
        grid: &Arc<Grid>,
        times: &[f64],
        delta: f64,
    ) -> Result<Self> {
        let integrals = potential.integrals(grid, times)?;
        let t_end = times.last().copied().unwrap_or(traj.t0());
        let mut k = 0.0f64;
        for f in traj.fields() {
            if f.time() > t_end * (1.0 + 1e-12) {
                break;
            }
            k = k.max(gradient(&hopf_cole(f, delta)?)?.magnitude().max());
        }
        Ok(Self { integrals, k })
    }
}

/// Pointwise convexity margin at `τ` for the given mode.
pub fn check_convexity_preservation(
    traj: &Trajectory,
    params: &EstimateParams,
    mode: ConvexityMode,
    potential: Option<&PotentialConstants>,
) -> Result<Margin> {
    let u = params.field_at(traj)?;
    let lf = LogFields::new(u, params.delta)?;
    let name = format!("convexity_{}", mode.as_str());
    let tol = params.tol(&name, "convexity");
    let pc = if mode.needs_potential_constants() {
        Some(potential.ok_or_else(|| Error::ConstantNotCertified {
            name: name.clone(),
            reason: "potential constants were not supplied".into(),
        })?)
    } else {
        None
    };
    let lower = |offset: f64, field: &crate::fields::ScalarField| {
        let (m, node) = field.min_with_index();
        (m + offset, node, m)
    };
    let upper = |bound: f64, field: &crate::fields::ScalarField| {
        let (m, node) = field.max_with_index();
        (bound - m, node, m)
    };
    let k0_sq = params.k0 * params.k0;
    let (value, node, worst) = match mode {
        ConvexityMode::Convex => lower(params.c0_lower, &lf.lambda_min),
        ConvexityMode::Concave => upper(k0_sq + params.c0_upper, &lf.lambda_max),
        ConvexityMode::TwoSided => {
            let a = lower(params.c0_lower, &lf.lambda_min);
            let b = upper(k0_sq + params.c0_upper, &lf.lambda_max);
            if b.0 < a.0 {
                b
            } else {
                a
            }
        }
        ConvexityMode::PotentialA => {
            lower(params.c0_lower + pc.unwrap().integrals.c_f1, &lf.lambda_min)
        }
        ConvexityMode::PotentialB => lower(params.c_lap + pc.unwrap().integrals.c_f2, &lf.lap),
        ConvexityMode::PotentialC => {
            let pc = pc.unwrap();
            upper(
                k0_sq + pc.k * pc.integrals.grad_l1_linf + params.c0_upper + pc.integrals.c_f3,
                &lf.lambda_max,
            )
        }
    };
    Ok(Margin::new(
        name,
        params.tau,
        u.time(),
        value,
        Some(node),
        worst,
        tol,
    ))
}

/// `K₀² + K ‖DF‖_{L¹L^∞} − 2∬|D²v|²ρ` against an adjoint run with drift `2Dv`.
pub fn check_k0k(
    traj: &Trajectory,
    run: &AdjointRun,
    params: &EstimateParams,
    constants: &PotentialConstants,
) -> Result<Margin> {
    let fields = aligned(traj, run, params)?;
    let delta = params.delta;
    let hess = space_time_integral(run, &fields, |u, _| {
        Ok(hessian(&hopf_cole(u, delta)?)?.frobenius_sq().scaled(2.0))
    })?;
    let bound = params.k0 * params.k0 + constants.k * constants.integrals.grad_l1_linf;
    Ok(Margin::new(
        "k0k",
        params.tau,
        fields.last().unwrap().time(),
        bound - hess,
        None,
        hess,
        params.tol("k0k", "convexity"),
    ))
}
