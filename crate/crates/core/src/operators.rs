//! Assembled discrete operators shared by the forward and adjoint solvers.
//!
//! The forward linearized operator is `L_h z = Δ_h z + ⟨b, D_h z⟩` with the
//! reflected Laplacian and a monotone upwind difference for the drift term.
//! The adjoint operator is its transpose in the trapezoid-weighted inner
//! product, `A_h = W⁻¹ L_hᵀ W`. Written out, `A_h ρ = Δ_h ρ − div_h(bρ)` in
//! flux form with donor-cell fluxes between neighbouring nodes and no flux
//! through the boundary, so `Σ w_i (A_h ρ)_i = 0` and
//! `⟨L_h z, ρ⟩_W = ⟨z, A_h ρ⟩_W` hold exactly.

use crate::grid::Grid;
use crate::linalg::{StencilMatrix, SLOTS};

/// Reflected (Neumann) Laplacian.
pub fn neumann_laplacian(grid: &Grid) -> StencilMatrix {
    let mut m = StencilMatrix::zeros(grid);
    for i in 0..m.len() {
        for (s, &(axis, step)) in SLOTS.iter().enumerate() {
            if axis >= grid.dim() {
                continue;
            }
            let inv_h2 = 1.0 / grid.h()[axis].powi(2);
            m.diag[i] -= inv_h2;
            if grid.neighbor(i, axis, step).is_some() {
                // The ghost node behind a face mirrors this neighbour.
                let mirrored = grid.neighbor(i, axis, -step).is_none();
                m.off[i][s] = if mirrored { 2.0 * inv_h2 } else { inv_h2 };
            }
        }
    }
    m
}

/// Adds the upwind drift term `⟨b, D z⟩` to `m`. Differences that would
/// reach past the boundary are dropped, so the operator still annihilates
/// constants and keeps nonnegative off-diagonals.
#[allow(clippy::needless_range_loop)]
pub fn add_upwind_drift(m: &mut StencilMatrix, grid: &Grid, drift: &[[f64; 2]]) {
    for i in 0..m.len() {
        for axis in 0..grid.dim() {
            let b = drift[i][axis];
            let h = grid.h()[axis];
            if b > 0.0 {
                if grid.neighbor(i, axis, 1).is_some() {
                    m.off[i][2 * axis + 1] += b / h;
                    m.diag[i] -= b / h;
                }
            } else if b < 0.0 && grid.neighbor(i, axis, -1).is_some() {
                m.off[i][2 * axis] += -b / h;
                m.diag[i] -= -b / h;
            }
        }
    }
}

/// Forward linearized operator `L_h = Δ_h + ⟨b, D_h ·⟩`.
pub fn forward_operator(grid: &Grid, drift: Option<&[[f64; 2]]>) -> StencilMatrix {
    let mut m = neumann_laplacian(grid);
    if let Some(b) = drift {
        add_upwind_drift(&mut m, grid, b);
    }
    m
}

/// Adjoint operator `A_h = W⁻¹ L_hᵀ W`.
pub fn adjoint_operator(grid: &Grid, drift: Option<&[[f64; 2]]>) -> StencilMatrix {
    forward_operator(grid, drift).weighted_adjoint(grid.weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;

    fn apply(m: &StencilMatrix, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        m.apply(x, &mut y);
        y
    }

    #[test]
    fn forward_operator_annihilates_constants() {
        let g = Grid::new(BoxDomain::unit(2).unwrap(), &[9, 8]).unwrap();
        let drift: Vec<[f64; 2]> = (0..g.node_count())
            .map(|i| {
                let x = g.coords(i);
                [(5.0 * x[0]).sin() * 3.0, x[1] - 0.4]
            })
            .collect();
        let l = forward_operator(&g, Some(&drift));
        let y = apply(&l, &vec![2.5; g.node_count()]);
        assert!(y.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn adjoint_conserves_weighted_mass() {
        let g = Grid::new(BoxDomain::unit(1).unwrap(), &[20]).unwrap();
        let drift: Vec<[f64; 2]> = (0..g.node_count())
            .map(|i| [4.0 * (g.coords(i)[0] - 0.5), 0.0])
            .collect();
        let a = adjoint_operator(&g, Some(&drift));
        let rho: Vec<f64> = (0..g.node_count()).map(|i| 1.0 + i as f64).collect();
        let y = apply(&a, &rho);
        let mass: f64 = g.weights().iter().zip(&y).map(|(w, v)| w * v).sum();
        assert!(mass.abs() < 1e-10);
    }

    #[test]
    fn off_diagonals_are_nonnegative() {
        let g = Grid::new(BoxDomain::unit(2).unwrap(), &[8, 8]).unwrap();
        let drift: Vec<[f64; 2]> = (0..g.node_count())
            .map(|i| [(i as f64).cos() * 7.0, (i as f64 * 0.3).sin() * 5.0])
            .collect();
        for m in [
            forward_operator(&g, Some(&drift)),
            adjoint_operator(&g, Some(&drift)),
        ] {
            assert!(m.off.iter().flatten().all(|&c| c >= 0.0));
            assert!(m.diag.iter().all(|&d| d <= 0.0));
        }
    }
}
