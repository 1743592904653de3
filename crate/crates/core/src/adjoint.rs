//! Backward Fokker-Planck solver `−∂_t ρ = Δρ − div(bρ)` with zero total
//! flux through the boundary.
//!
//! Each backward step solves `(I − dt A_h(t_k)) ρ_k = ρ_{k+1}` where `A_h` is
//! the weighted transpose of the forward upwind operator (see
//! [`crate::operators`]). Column sums of `W A_h` vanish, so the weighted mass
//! is conserved up to the linear-solver residual, and `I − dt A_h` is an
//! M-matrix, so nonnegative data stay nonnegative.

use std::sync::Arc;

use crate::calculus::gradient;
use crate::error::{Error, Result};
use crate::fields::{ScalarField, Trajectory, TrajectoryMeta};
use crate::grid::Grid;
use crate::heat::SolverParams;
use crate::linalg::{bicgstab, solve_stencil_1d, KrylovSettings};
use crate::operators::adjoint_operator;

/// Largest drift magnitude accepted before the run is refused.
pub const DRIFT_LIMIT: f64 = 1e6;

#[derive(Debug, Clone)]
enum DriftSource {
    Constant([f64; 2]),
    Sampled {
        times: Vec<f64>,
        values: Vec<Vec<[f64; 2]>>,
    },
}

/// Time-dependent drift `b(x, t)` together with its certified sup bound.
#[derive(Debug, Clone)]
pub struct DriftSampler {
    source: DriftSource,
    bound: f64,
    delta: Option<f64>,
}

impl DriftSampler {
    pub fn zero() -> Self {
        Self::constant([0.0, 0.0])
    }

    /// Spatially and temporally constant drift.
    pub fn constant(c: [f64; 2]) -> Self {
        Self {
            source: DriftSource::Constant(c),
            bound: (c[0] * c[0] + c[1] * c[1]).sqrt(),
            delta: None,
        }
    }

    /// `b = 2 D v` at every stored time of the log trajectory `v`.
    pub fn from_log_trajectory(v: &Trajectory) -> Result<Self> {
        let mut values = Vec::with_capacity(v.len());
        let mut bound = 0.0f64;
        for f in v.fields() {
            let b = gradient(f)?.scaled(2.0);
            bound = bound.max(b.magnitude().max());
            values.push(b.values().to_vec());
        }
        if !(bound <= DRIFT_LIMIT) {
            return Err(Error::DriftUnbounded { bound });
        }
        Ok(Self {
            source: DriftSource::Sampled {
                times: v.times().to_vec(),
                values,
            },
            bound,
            delta: v.meta.delta,
        })
    }

    /// Sup of `|b|` over all sampled nodes and times.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn is_zero(&self) -> bool {
        self.bound == 0.0
    }

    /// Stored sample times, if the drift comes from a trajectory.
    pub fn times(&self) -> Option<&[f64]> {
        match &self.source {
            DriftSource::Sampled { times, .. } => Some(times),
            DriftSource::Constant(_) => None,
        }
    }

    fn at(&self, grid: &Grid, k: usize) -> Option<Vec<[f64; 2]>> {
        match &self.source {
            DriftSource::Constant(_) if self.bound == 0.0 => None,
            DriftSource::Constant(c) => Some(vec![*c; grid.node_count()]),
            DriftSource::Sampled { values, .. } => Some(values[k].clone()),
        }
    }
}

/// Per-time values of the tail functional for one radius.
#[derive(Debug, Clone, PartialEq)]
pub struct TailRecord {
    pub radius: f64,
    pub values: Vec<f64>,
}

/// Result of one backward run, stored in increasing time order.
#[derive(Debug, Clone)]
pub struct AdjointRun {
    pub rho: Trajectory,
    pub terminal: ScalarField,
    pub mass_log: Vec<f64>,
    pub tail_log: Vec<TailRecord>,
    /// Smallest value over the run, for the nonnegativity diagnostic.
    pub min_value: f64,
    pub drift_bound: f64,
    pub drift_delta: Option<f64>,
}

impl AdjointRun {
    pub fn times(&self) -> &[f64] {
        self.rho.times()
    }

    pub fn is_drift_free(&self) -> bool {
        self.drift_bound == 0.0
    }

    /// Largest relative deviation of the logged mass from the terminal mass.
    pub fn mass_drift(&self) -> f64 {
        let m = self.terminal.integral();
        let scale = if m != 0.0 { m.abs() } else { 1.0 };
        self.mass_log
            .iter()
            .map(|x| (x - m).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// Evaluates the tail functional at every stored time for each radius.
    pub fn record_tails(&mut self, radii: &[f64]) -> Result<()> {
        let mut log = Vec::with_capacity(radii.len());
        for &r in radii {
            let values = (0..self.rho.len())
                .map(|k| tail_energy(self, r, k))
                .collect::<Result<Vec<_>>>()?;
            log.push(TailRecord { radius: r, values });
        }
        self.tail_log = log;
        Ok(())
    }
}

/// Backward run from `rho_tau` at `params.t_end` down to `params.t0`.
///
/// A sampled drift fixes the time levels to its stored times inside
/// `[t0, t_end]`; otherwise the solver time grid of `params` is used.
pub fn solve_backward_fp(
    rho_tau: &ScalarField,
    drift: &DriftSampler,
    params: &SolverParams,
) -> Result<AdjointRun> {
    params.validate()?;
    let (min, node) = rho_tau.min_with_index();
    if min < 0.0 {
        return Err(Error::InvalidParams(format!(
            "terminal datum must be nonnegative, found {min} at node {node}"
        )));
    }
    if !(drift.bound <= DRIFT_LIMIT) {
        return Err(Error::DriftUnbounded { bound: drift.bound });
    }
    let grid = rho_tau.grid().clone();
    let (times, drift_index): (Vec<f64>, Vec<usize>) = match drift.times() {
        Some(stored) => {
            let tol = |t: f64| 1e-9 * t.abs().max(1.0);
            let lo = stored
                .iter()
                .position(|&s| (s - params.t0).abs() <= tol(params.t0))
                .ok_or(Error::CheckpointMissing(params.t0))?;
            let hi = stored
                .iter()
                .position(|&s| (s - params.t_end).abs() <= tol(params.t_end))
                .ok_or(Error::CheckpointMissing(params.t_end))?;
            if hi <= lo {
                return Err(Error::InvalidParams("empty drift window".into()));
            }
            ((lo..=hi).map(|k| stored[k]).collect(), (lo..=hi).collect())
        }
        None => {
            let t = params.time_grid();
            let idx = (0..t.len()).collect();
            (t, idx)
        }
    };
    if let DriftSource::Sampled { values, .. } = &drift.source {
        if values[0].len() != grid.node_count() {
            return Err(Error::DriftMismatch(
                "drift was sampled on a different grid".into(),
            ));
        }
    }

    let settings = KrylovSettings::default();
    let mut rho = rho_tau.clone().with_time(params.t_end);
    let mut fields = vec![rho.clone()];
    let mut min_value = rho.min();
    for k in (1..times.len()).rev() {
        let dt = times[k] - times[k - 1];
        let b = drift.at(&grid, drift_index[k - 1]);
        let m = adjoint_operator(&grid, b.as_deref()).shifted_identity(-dt);
        let values = if grid.dim() == 1 {
            solve_stencil_1d(&m, rho.values())?
        } else {
            bicgstab(&m, rho.values(), rho.values(), settings)?
        };
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure(format!(
                "non-finite adjoint value at node {node}"
            )));
        }
        rho = ScalarField::from_parts(grid.clone(), values, times[k - 1]);
        min_value = min_value.min(rho.min());
        fields.push(rho.clone());
    }
    fields.reverse();
    let mass_log = fields.iter().map(|f| f.integral()).collect();
    let rho = Trajectory::new(
        fields,
        TrajectoryMeta {
            delta: drift.delta,
            potential: "none".into(),
            every_step: true,
        },
    )?;
    Ok(AdjointRun {
        rho,
        terminal: rho_tau.clone().with_time(params.t_end),
        mass_log,
        tail_log: Vec::new(),
        min_value,
        drift_bound: drift.bound,
        drift_delta: drift.delta,
    })
}

/// Weighted total mass of the stored field `t_index`.
pub fn total_mass(run: &AdjointRun, t_index: usize) -> f64 {
    run.rho.fields()[t_index].integral()
}

/// `min_t (‖ρ_τ‖_p − ‖ρ(t)‖_p)`; defined for drift-free runs only.
pub fn lp_contraction_check(run: &AdjointRun, p: f64) -> Result<f64> {
    if !run.is_drift_free() {
        return Err(Error::DriftNotZero(run.drift_bound));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let top = crate::calculus::lp_norm(&run.terminal, p)?;
    let mut margin = f64::INFINITY;
    for f in run.rho.fields() {
        margin = margin.min(top - crate::calculus::lp_norm(f, p)?);
    }
    Ok(margin)
}

/// `H_R(σ) = ∫_{|x| ≥ R} ρ(σ)² + ∫_σ^τ ∫_{|x| ≥ R} |Dρ|²`, with `σ` the stored
/// time `t_index` and the time integral by the trapezoid rule.
pub fn tail_energy(run: &AdjointRun, radius: f64, t_index: usize) -> Result<f64> {
    let grid = run.rho.grid();
    if !(radius >= 0.0) || !grid.domain().contains_origin_ball(radius) {
        return Err(Error::RadiusTooLarge { radius });
    }
    let fields = run.rho.fields();
    if t_index >= fields.len() {
        return Err(Error::InvalidParams(format!(
            "time index {t_index} out of range ({} stored)",
            fields.len()
        )));
    }
    let outside: Vec<f64> = (0..grid.node_count())
        .map(|i| {
            let x = grid.coords(i);
            if (x[0] * x[0] + x[1] * x[1]).sqrt() >= radius {
                grid.weights()[i]
            } else {
                0.0
            }
        })
        .collect();
    let masked = |vals: &[f64]| -> f64 { outside.iter().zip(vals).map(|(w, v)| w * v).sum() };
    let sq: Vec<f64> = fields[t_index].values().iter().map(|v| v * v).collect();
    let mut h = masked(&sq);
    let dissipation = fields[t_index..]
        .iter()
        .map(|f| Ok(masked(gradient(f)?.norm_sq().values())))
        .collect::<Result<Vec<f64>>>()?;
    let times = &run.rho.times()[t_index..];
    for k in 1..times.len() {
        h += 0.5 * (times[k] - times[k - 1]) * (dissipation[k] + dissipation[k - 1]);
    }
    Ok(h)
}

/// Tensor cosine bump `Π (1 + cos(π (x_k − c_k)/r))/2` on `|x_k − c_k| < r`,
/// scaled to unit discrete mass.
pub fn cosine_bump(grid: &Arc<Grid>, center: [f64; 2], radius: f64) -> Result<ScalarField> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParams(format!(
            "bump radius must be positive, got {radius}"
        )));
    }
    let raw = ScalarField::from_fn(grid.clone(), 0.0, |x| {
        (0..grid.dim())
            .map(|k| {
                let s = (x[k] - center[k]) / radius;
                if s.abs() < 1.0 {
                    0.5 * (1.0 + (std::f64::consts::PI * s).cos())
                } else {
                    0.0
                }
            })
            .product()
    })?;
    let mass = raw.integral();
    if mass <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "bump of radius {radius} at {center:?} covers no node"
        )));
    }
    Ok(raw.scaled(1.0 / mass))
}

/// `count` bump centres snapped to nodes, spread evenly over the middle part
/// of the box given by `span ∈ (0, 1]` (fraction of each side length).
pub fn bump_centers(grid: &Grid, count: usize, span: f64) -> Vec<[f64; 2]> {
    if count == 0 {
        return Vec::new();
    }
    let per_axis: [usize; 2] = if grid.dim() == 1 {
        [count, 1]
    } else {
        let a = (count as f64).sqrt().ceil() as usize;
        [a, count.div_ceil(a)]
    };
    let axis_points = |axis: usize| -> Vec<f64> {
        if axis >= grid.dim() {
            return vec![0.0];
        }
        let d = grid.domain();
        let mid = 0.5 * (d.lower()[axis] + d.upper()[axis]);
        let half = 0.5 * span * d.length(axis);
        let m = per_axis[axis];
        (0..m)
            .map(|k| {
                let x = if m == 1 {
                    mid
                } else {
                    mid - half + 2.0 * half * k as f64 / (m - 1) as f64
                };
                let h = grid.h()[axis];
                let i = ((x - d.lower()[axis]) / h).round();
                d.lower()[axis] + i * h
            })
            .collect()
    };
    let xs = axis_points(0);
    let ys = axis_points(1);
    let mut out = Vec::with_capacity(count);
    for &y in &ys {
        for &x in &xs {
            if out.len() < count {
                out.push([x, y]);
            }
        }
    }
    out
}
