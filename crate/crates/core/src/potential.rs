//! Space-time potentials `F(x, t)` for `∂_t u − Δu + F u = 0`, together with
//! the derivative bounds the convexity estimates consume.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{gradient, hessian, min_max_eigenvalue};
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceProfile {
    /// `|x − center|²`
    Quadratic { center: Vec<f64> },
    /// `Π cos(k π (x_i − lower_i) / L_i)`
    Cosine { wavenumber: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant { value: f64 },
    /// `a0 + a1 t`
    Linear { a0: f64, a1: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant { value } => value,
            TimeProfile::Linear { a0, a1 } => a0 + a1 * t,
        }
    }
}

/// Analytic bounds a user may declare; each one is checked against the
/// sampled field before it is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredBounds {
    /// `D²F ≤ c_f1(t) I`, given as a constant in time.
    pub c_f1: Option<f64>,
    /// `ΔF ≤ c_f2(t)`.
    pub c_f2: Option<f64>,
    /// `D²F ≥ −c_f3(t) I`.
    pub c_f3: Option<f64>,
    /// `sup_x |DF(x, t)|`.
    pub grad_sup: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    None,
    Separable {
        space: SpaceProfile,
        time: TimeProfile,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub kind: PotentialKind,
    #[serde(default)]
    pub bounds: DeclaredBounds,
}

impl PotentialSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// `F(x, t) = a(t) |x − center|²`.
    pub fn quadratic(center: Vec<f64>, time: TimeProfile) -> Self {
        Self {
            kind: PotentialKind::Separable {
                space: SpaceProfile::Quadratic { center },
                time,
            },
            bounds: DeclaredBounds::default(),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, PotentialKind::None)
    }

    pub fn id(&self) -> String {
        match &self.kind {
            PotentialKind::None => "none".into(),
            PotentialKind::Separable { space, time } => {
                let s = match space {
                    SpaceProfile::Quadratic { .. } => "quadratic",
                    SpaceProfile::Cosine { .. } => "cosine",
                };
                let t = match time {
                    TimeProfile::Constant { value } => format!("const({value})"),
                    TimeProfile::Linear { a0, a1 } => format!("linear({a0},{a1})"),
                };
                format!("{s}*{t}")
            }
        }
    }

    pub fn eval(&self, grid: &Grid, x: [f64; 2], t: f64) -> f64 {
        match &self.kind {
            PotentialKind::None => 0.0,
            PotentialKind::Separable { space, time } => {
                let a = time.eval(t);
                let s: f64 = match space {
                    SpaceProfile::Quadratic { center } => (0..grid.dim())
                        .map(|k| {
                            let d = x[k] - center.get(k).copied().unwrap_or(0.0);
                            d * d
                        })
                        .sum(),
                    SpaceProfile::Cosine { wavenumber } => (0..grid.dim())
                        .map(|k| {
                            let lo = grid.domain().lower()[k];
                            let len = grid.domain().length(k);
                            (wavenumber * std::f64::consts::PI * (x[k] - lo) / len).cos()
                        })
                        .product(),
                };
                a * s
            }
        }
    }

    /// Samples `F(·, t)` at every node.
    pub fn sample(&self, grid: &Arc<Grid>, t: f64) -> ScalarField {
        let values = (0..grid.node_count())
            .map(|i| self.eval(grid, grid.coords(i), t))
            .collect();
        ScalarField::from_parts(grid.clone(), values, t)
    }

    /// Pointwise derivative data of `F(·, t)` sampled on interior nodes.
    ///
    /// The reflected stencils only make sense for fields obeying the Neumann
    /// condition, which a potential need not do, so boundary nodes are skipped.
    pub fn derivative_sample(&self, grid: &Arc<Grid>, t: f64) -> Result<PotentialDerivatives> {
        let f = self.sample(grid, t);
        let (lmin, lmax) = min_max_eigenvalue(&hessian(&f)?)?;
        let lap = hessian(&f)?.trace();
        let grad = gradient(&f)?.magnitude();
        let mut d = PotentialDerivatives {
            hess_max: f64::NEG_INFINITY,
            hess_min: f64::INFINITY,
            lap_max: f64::NEG_INFINITY,
            grad_sup: 0.0,
            neg_part_sup: 0.0,
        };
        for i in 0..grid.node_count() {
            d.neg_part_sup = d.neg_part_sup.max(-f.values()[i]);
            if grid.is_boundary(i) {
                continue;
            }
            d.hess_max = d.hess_max.max(lmax.values()[i]);
            d.hess_min = d.hess_min.min(lmin.values()[i]);
            d.lap_max = d.lap_max.max(lap.values()[i]);
            d.grad_sup = d.grad_sup.max(grad.values()[i]);
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialDerivatives {
    /// `max λ_max(D²F)`
    pub hess_max: f64,
    /// `min λ_min(D²F)`
    pub hess_min: f64,
    /// `max ΔF`
    pub lap_max: f64,
    /// `max |DF|`
    pub grad_sup: f64,
    /// `max F⁻`
    pub neg_part_sup: f64,
}

/// Certified time integrals of the potential bounds over `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PotentialIntegrals {
    /// `∫ c_f1`
    pub c_f1: f64,
    /// `∫ c_f2`
    pub c_f2: f64,
    /// `∫ c_f3`
    pub c_f3: f64,
    /// `‖DF‖_{L¹(L^∞)}`
    pub grad_l1_linf: f64,
}

/// Relative slack allowed when a declared bound is compared with samples.
const CERTIFY_SLACK: f64 = 1e-8;

fn certify(name: &str, declared: Option<f64>, sampled: f64) -> Result<f64> {
    match declared {
        None => Ok(sampled),
        Some(d) if d + CERTIFY_SLACK * d.abs().max(1.0) >= sampled => Ok(d.min(sampled)),
        Some(d) => Err(Error::ConstantNotCertified {
            name: name.into(),
            reason: format!("declared {d} but the sampled field requires {sampled}"),
        }),
    }
}

impl PotentialSpec {
    /// Integrates the certified bounds over the sample times (trapezoid).
    ///
    /// A declared bound must dominate the sampled derivative field; the
    /// smaller of the two is used.
    pub fn integrals(&self, grid: &Arc<Grid>, times: &[f64]) -> Result<PotentialIntegrals> {
        if self.is_none() || times.len() < 2 {
            return Ok(PotentialIntegrals::default());
        }
        let mut samples = Vec::with_capacity(times.len());
        for &t in times {
            let d = self.derivative_sample(grid, t)?;
            samples.push([
                certify("c_f1", self.bounds.c_f1, d.hess_max.max(0.0))?,
                certify("c_f2", self.bounds.c_f2, d.lap_max.max(0.0))?,
                certify("c_f3", self.bounds.c_f3, (-d.hess_min).max(0.0))?,
                certify("grad_sup", self.bounds.grad_sup, d.grad_sup)?,
            ]);
        }
        let mut acc = [0.0; 4];
        for k in 1..times.len() {
            let dt = times[k] - times[k - 1];
            for c in 0..4 {
                acc[c] += 0.5 * dt * (samples[k][c] + samples[k - 1][c]);
            }
        }
        Ok(PotentialIntegrals {
            c_f1: acc[0],
            c_f2: acc[1],
            c_f3: acc[2],
            grad_l1_linf: acc[3],
        })
    }
}
