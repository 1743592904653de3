//! Finite-difference calculus on node fields.
//!
//! All stencils are the standard second-order central ones. Beyond a face the
//! ghost value is the even reflection of the first interior node, which is the
//! discrete form of a homogeneous Neumann condition: the normal component of
//! [`gradient`] vanishes identically on faces.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{ScalarField, SymMatrixField, VectorField};
use crate::grid::Grid;

pub fn quadrature_weights(grid: &Arc<Grid>) -> ScalarField {
    ScalarField::from_parts(grid.clone(), grid.weights().to_vec(), 0.0)
}

fn ensure_finite(f: &ScalarField) -> Result<()> {
    match f.values().iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFiniteInput {
            what: "calculus input",
            node,
        }),
        None => Ok(()),
    }
}

fn central_difference(g: &Grid, f: &[f64], idx: usize, axis: usize) -> f64 {
    let p = g.reflected_neighbor(idx, axis, 1);
    let m = g.reflected_neighbor(idx, axis, -1);
    (f[p] - f[m]) / (2.0 * g.h()[axis])
}

fn second_difference(g: &Grid, f: &[f64], idx: usize, axis: usize) -> f64 {
    let p = g.reflected_neighbor(idx, axis, 1);
    let m = g.reflected_neighbor(idx, axis, -1);
    let h = g.h()[axis];
    (f[p] - 2.0 * f[idx] + f[m]) / (h * h)
}

fn cross_difference(g: &Grid, f: &[f64], idx: usize) -> f64 {
    let xp = g.reflected_neighbor(idx, 0, 1);
    let xm = g.reflected_neighbor(idx, 0, -1);
    let pp = g.reflected_neighbor(xp, 1, 1);
    let pm = g.reflected_neighbor(xp, 1, -1);
    let mp = g.reflected_neighbor(xm, 1, 1);
    let mm = g.reflected_neighbor(xm, 1, -1);
    (f[pp] - f[pm] - f[mp] + f[mm]) / (4.0 * g.h()[0] * g.h()[1])
}

pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    ensure_finite(f)?;
    let g = f.grid();
    let v = f.values();
    let values = (0..g.node_count())
        .map(|i| {
            let mut d = [0.0; 2];
            for (axis, da) in d.iter_mut().enumerate().take(g.dim()) {
                *da = central_difference(g, v, i, axis);
            }
            d
        })
        .collect();
    Ok(VectorField::from_parts(g.clone(), values, f.time()))
}

pub fn hessian(f: &ScalarField) -> Result<SymMatrixField> {
    ensure_finite(f)?;
    let g = f.grid();
    let v = f.values();
    let values = (0..g.node_count())
        .map(|i| {
            if g.dim() == 1 {
                [second_difference(g, v, i, 0), 0.0, 0.0]
            } else {
                [
                    second_difference(g, v, i, 0),
                    cross_difference(g, v, i),
                    second_difference(g, v, i, 1),
                ]
            }
        })
        .collect();
    Ok(SymMatrixField::from_parts(g.clone(), values, f.time()))
}

/// Sum of the pure second differences; bitwise equal to the trace of
/// [`hessian`].
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    ensure_finite(f)?;
    let g = f.grid();
    let v = f.values();
    let values = (0..g.node_count())
        .map(|i| {
            if g.dim() == 1 {
                second_difference(g, v, i, 0)
            } else {
                second_difference(g, v, i, 0) + second_difference(g, v, i, 1)
            }
        })
        .collect();
    Ok(ScalarField::from_parts(g.clone(), values, f.time()))
}

/// Hopf-Cole transform `v = log(u + delta)`.
pub fn hopf_cole(u: &ScalarField, delta: f64) -> Result<ScalarField> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "Hopf-Cole shift must be a finite nonnegative number, got {delta}"
        )));
    }
    let (min, node) = u.min_with_index();
    if min + delta <= 0.0 {
        return Err(Error::NonPositiveShiftedField {
            min: min + delta,
            node,
        });
    }
    Ok(u.map(|x| (x + delta).ln()))
}

/// `Δ|Dv|² − 2|D²v|² − 2⟨Dv, D(Δv)⟩` with this module's stencils.
pub fn bochner_residual(v: &ScalarField) -> Result<ScalarField> {
    let dv = gradient(v)?;
    let omega = dv.norm_sq();
    let lap_omega = laplacian(&omega)?;
    let hess_sq = hessian(v)?.frobenius_sq();
    let d_lap = gradient(&laplacian(v)?)?;
    let cross = dv.dot(&d_lap);
    let values = lap_omega
        .values()
        .iter()
        .zip(hess_sq.values())
        .zip(cross.values())
        .map(|((l, h), c)| l - 2.0 * h - 2.0 * c)
        .collect();
    Ok(ScalarField::from_parts(v.grid().clone(), values, v.time()))
}

/// Closed-form eigenvalues of a symmetric 2x2 (or 1x1) matrix.
pub fn eigenvalues_2x2(m: [f64; 3]) -> (f64, f64) {
    let mean = 0.5 * (m[0] + m[2]);
    let r = (0.5 * (m[0] - m[2])).hypot(m[1]);
    (mean - r, mean + r)
}

/// Pointwise smallest and largest eigenvalue.
pub fn min_max_eigenvalue(m: &SymMatrixField) -> Result<(ScalarField, ScalarField)> {
    let g = m.grid();
    let (lo, hi): (Vec<f64>, Vec<f64>) = match g.dim() {
        1 => m.values().iter().map(|e| (e[0], e[0])).unzip(),
        2 => m.values().iter().map(|&e| eigenvalues_2x2(e)).unzip(),
        d => return Err(Error::UnsupportedDim(d)),
    };
    Ok((
        ScalarField::from_parts(g.clone(), lo, m.time()),
        ScalarField::from_parts(g.clone(), hi, m.time()),
    ))
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        Err(Error::InvalidExponent(p))
    } else {
        Ok(())
    }
}

/// Weighted discrete `L^p` norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(lp_norm_of(f.grid().weights(), f.values(), p))
}

/// `L^p` norm of the pointwise magnitude of a vector field.
pub fn lp_norm_vector(f: &VectorField, p: f64) -> Result<f64> {
    lp_norm(&f.magnitude(), p)
}

pub(crate) fn lp_norm_of(weights: &[f64], values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 1.0 {
        return weights.iter().zip(values).map(|(w, v)| w * v.abs()).sum();
    }
    if p == 2.0 {
        return weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt();
    }
    weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}
