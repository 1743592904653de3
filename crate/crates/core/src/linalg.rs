//! Five-point (three-point in 1D) node operators and the deterministic
//! solvers used by the implicit steps.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Neighbour slots in a stencil row: x-, x+, y-, y+.
pub(crate) const SLOTS: [(usize, isize); 4] = [(0, -1), (0, 1), (1, -1), (1, 1)];

/// Sparse operator with at most four off-diagonal entries per row, one per
/// grid neighbour. Missing neighbours carry a zero coefficient and point at
/// the row itself.
#[derive(Debug, Clone)]
pub struct StencilMatrix {
    pub(crate) diag: Vec<f64>,
    pub(crate) off: Vec<[f64; 4]>,
    pub(crate) nbr: Vec<[usize; 4]>,
}

impl StencilMatrix {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.node_count();
        let nbr = (0..n)
            .map(|i| {
                let mut slots = [i; 4];
                for (s, &(axis, step)) in SLOTS.iter().enumerate() {
                    if axis < grid.dim() {
                        if let Some(j) = grid.neighbor(i, axis, step) {
                            slots[s] = j;
                        }
                    }
                }
                slots
            })
            .collect();
        Self {
            diag: vec![0.0; n],
            off: vec![[0.0; 4]; n],
            nbr,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.diag.len() {
            let mut acc = self.diag[i] * x[i];
            for s in 0..4 {
                acc += self.off[i][s] * x[self.nbr[i][s]];
            }
            y[i] = acc;
        }
    }

    /// `I + scale * self`.
    pub fn shifted_identity(&self, scale: f64) -> StencilMatrix {
        let mut m = self.clone();
        for i in 0..m.diag.len() {
            m.diag[i] = 1.0 + scale * m.diag[i];
            for s in 0..4 {
                m.off[i][s] *= scale;
            }
        }
        m
    }

    /// `W^{-1} Mᵀ W` for diagonal weights `W`: the adjoint in the weighted
    /// inner product `<x, y>_W = Σ w_i x_i y_i`.
    pub fn weighted_adjoint(&self, weights: &[f64]) -> StencilMatrix {
        let mut adj = StencilMatrix {
            diag: self.diag.clone(),
            off: vec![[0.0; 4]; self.len()],
            nbr: self.nbr.clone(),
        };
        for j in 0..self.len() {
            for s in 0..4 {
                let i = self.nbr[j][s];
                if i == j {
                    continue;
                }
                // Row i holds the coefficient for column j in the opposite slot.
                let back = s ^ 1;
                debug_assert_eq!(self.nbr[i][back], j);
                adj.off[j][s] = weights[i] * self.off[i][back] / weights[j];
            }
        }
        adj
    }

    /// Dense entry `M[i][j]`, for tests and diagnostics.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let mut v = if i == j { self.diag[i] } else { 0.0 };
        for s in 0..4 {
            if self.nbr[i][s] == j && j != i {
                v += self.off[i][s];
            }
        }
        v
    }
}

/// Thomas algorithm for `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
/// Stable for diagonally dominant systems (by rows or by columns).
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::LinearSolveFailure("zero pivot in row 0".into()));
    }
    c[0] = sup[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::LinearSolveFailure(format!("zero pivot in row {i}")));
        }
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Solves a 1D stencil system directly.
pub(crate) fn solve_stencil_1d(m: &StencilMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let sub: Vec<f64> = m.off.iter().map(|o| o[0]).collect();
    let sup: Vec<f64> = m.off.iter().map(|o| o[1]).collect();
    solve_tridiagonal(&sub, &m.diag, &sup, rhs)
}

/// Stopping rule for the Krylov solvers: relative residual and an iteration cap.
#[derive(Debug, Clone, Copy)]
pub struct KrylovSettings {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-14,
            max_iter: 2000,
        }
    }
}

fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Jacobi-preconditioned conjugate gradients in the weighted inner product.
/// `m` must be self-adjoint and positive definite with respect to `weights`.
pub fn conjugate_gradient(
    m: &StencilMatrix,
    weights: &[f64],
    rhs: &[f64],
    guess: &[f64],
    settings: KrylovSettings,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut x = guess.to_vec();
    let mut r = vec![0.0; n];
    m.apply(&x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let b_norm = wdot(weights, rhs, rhs).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut z: Vec<f64> = r.iter().zip(&m.diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = wdot(weights, &r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..settings.max_iter {
        if wdot(weights, &r, &r).sqrt() <= settings.rel_tol * b_norm {
            return Ok(x);
        }
        m.apply(&p, &mut ap);
        let pap = wdot(weights, &p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::LinearSolveFailure(
                "operator is not positive definite".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / m.diag[i];
        }
        let rz_new = wdot(weights, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if wdot(weights, &r, &r).sqrt() <= settings.rel_tol * b_norm * 100.0 {
        return Ok(x);
    }
    Err(Error::LinearSolveFailure(format!(
        "conjugate gradients did not converge in {} iterations",
        settings.max_iter
    )))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Jacobi-preconditioned BiCGSTAB for nonsymmetric stencil systems.
pub fn bicgstab(
    m: &StencilMatrix,
    rhs: &[f64],
    guess: &[f64],
    settings: KrylovSettings,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let b_norm = dot(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = guess.to_vec();
    let mut r = vec![0.0; n];
    m.apply(&x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..settings.max_iter {
        if dot(&r, &r).sqrt() <= settings.rel_tol * b_norm {
            return Ok(x);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] / m.diag[i];
        }
        m.apply(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() <= settings.rel_tol * b_norm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        for i in 0..n {
            z[i] = s[i] / m.diag[i];
        }
        m.apply(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            break;
        }
    }
    let mut res = vec![0.0; n];
    m.apply(&x, &mut res);
    let rn = res
        .iter()
        .zip(rhs)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    if rn <= settings.rel_tol * b_norm * 100.0 {
        return Ok(x);
    }
    Err(Error::LinearSolveFailure(format!(
        "BiCGSTAB stalled with relative residual {:.3e}",
        rn / b_norm
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;

    #[test]
    fn tridiagonal_matches_dense_solution() {
        let sub = [0.0, -1.0, -1.0, -2.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let sup = [-2.0, -1.0, -1.0, 0.0];
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut v = diag[i] * x_true[i];
                if i > 0 {
                    v += sub[i] * x_true[i - 1];
                }
                if i < 3 {
                    v += sup[i] * x_true[i + 1];
                }
                v
            })
            .collect();
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        for (a, b) in x.iter().zip(x_true) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    fn laplacian_like(grid: &Grid) -> StencilMatrix {
        let mut m = StencilMatrix::zeros(grid);
        for i in 0..m.len() {
            for (s, &(axis, step)) in SLOTS.iter().enumerate() {
                if axis >= grid.dim() {
                    continue;
                }
                let h2 = grid.h()[axis].powi(2);
                if grid.neighbor(i, axis, step).is_some() {
                    let doubled = grid.neighbor(i, axis, -step).is_none();
                    m.off[i][s] = if doubled { 2.0 } else { 1.0 } / h2;
                    m.diag[i] -= 1.0 / h2;
                } else {
                    m.diag[i] -= 1.0 / h2;
                }
            }
        }
        m
    }

    #[test]
    fn weighted_adjoint_of_reflected_laplacian_is_itself() {
        let g = Grid::new(BoxDomain::unit(2).unwrap(), &[8, 9]).unwrap();
        let lap = laplacian_like(&g);
        let adj = lap.weighted_adjoint(g.weights());
        for i in 0..lap.len() {
            assert!((lap.diag[i] - adj.diag[i]).abs() < 1e-12);
            for s in 0..4 {
                assert!((lap.off[i][s] - adj.off[i][s]).abs() < 1e-9, "{i} {s}");
            }
        }
    }

    #[test]
    fn krylov_solvers_agree_with_direct_1d() {
        let g = Grid::new(BoxDomain::unit(1).unwrap(), &[32]).unwrap();
        let m = laplacian_like(&g).shifted_identity(-0.01);
        let rhs: Vec<f64> = (0..m.len()).map(|i| 1.0 + (i as f64).sin()).collect();
        let direct = solve_stencil_1d(&m, &rhs).unwrap();
        let cg = conjugate_gradient(&m, g.weights(), &rhs, &rhs, KrylovSettings::default())
            .unwrap();
        let bi = bicgstab(&m, &rhs, &rhs, KrylovSettings::default()).unwrap();
        for i in 0..m.len() {
            assert!((direct[i] - cg[i]).abs() < 1e-12);
            assert!((direct[i] - bi[i]).abs() < 1e-12);
        }
    }
}
