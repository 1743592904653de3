//! Backward-Euler solver for `∂_t u − Δu + F u = 0` with homogeneous Neumann
//! conditions.
//!
//! Each step solves `(I − dt Δ_h + dt F(·, t_new)) u_new = u`. The matrix is
//! an M-matrix whenever `dt · max F⁻ < 1`, so positivity and (for `F = 0`) the
//! discrete maximum principle hold unconditionally in `dt`. In 1D the system
//! is tridiagonal; in 2D it is solved by conjugate gradients in the
//! trapezoid-weighted inner product, where it is symmetric.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ScalarField, Trajectory, TrajectoryMeta};
use crate::grid::Grid;
use crate::linalg::{conjugate_gradient, solve_stencil_1d, KrylovSettings, StencilMatrix};
use crate::operators::neumann_laplacian;
use crate::potential::PotentialSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub dt: f64,
    pub t0: f64,
    pub t_end: f64,
    /// Sorted absolute times in `(t0, t_end]` at which fields are stored.
    pub checkpoint_times: Vec<f64>,
    /// Store every step instead of checkpoints only.
    #[serde(default)]
    pub store_every_step: bool,
}

impl SolverParams {
    pub fn new(dt: f64, t0: f64, t_end: f64, checkpoint_times: Vec<f64>) -> Result<Self> {
        let p = Self {
            dt,
            t0,
            t_end,
            checkpoint_times,
            store_every_step: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn every_step(mut self, on: bool) -> Self {
        self.store_every_step = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t0 >= 0.0 && self.t_end > self.t0) {
            return bad(format!(
                "need 0 <= t0 < t_end, got t0 = {}, t_end = {}",
                self.t0, self.t_end
            ));
        }
        if self.dt > (self.t_end - self.t0) / 16.0 * (1.0 + 1e-12) {
            return bad(format!(
                "dt = {} exceeds (t_end - t0)/16 = {}",
                self.dt,
                (self.t_end - self.t0) / 16.0
            ));
        }
        let mut prev = self.t0;
        for &c in &self.checkpoint_times {
            if !(c > prev && c <= self.t_end * (1.0 + 1e-12)) {
                return bad(format!(
                    "checkpoints must be increasing within (t0, t_end], got {c}"
                ));
            }
            prev = c;
        }
        Ok(())
    }

    /// The full time grid: uniform steps of at most `dt` inside each interval
    /// between consecutive checkpoints, landing exactly on every checkpoint
    /// and on `t_end`.
    pub fn time_grid(&self) -> Vec<f64> {
        let mut stops: Vec<f64> = self.checkpoint_times.clone();
        if stops.last().is_none_or(|&l| l < self.t_end * (1.0 - 1e-12)) {
            stops.push(self.t_end);
        }
        let mut times = vec![self.t0];
        let mut prev = self.t0;
        for stop in stops {
            let span = stop - prev;
            let n = ((span / self.dt) - 1e-9).ceil().max(1.0) as usize;
            for k in 1..n {
                times.push(prev + span * k as f64 / n as f64);
            }
            times.push(stop);
            prev = stop;
        }
        times
    }

    fn is_checkpoint(&self, t: f64) -> bool {
        self.checkpoint_times
            .iter()
            .any(|&c| (c - t).abs() <= 1e-12 * c.abs().max(1.0))
    }
}

/// Reusable implicit step: caches the Laplacian of one grid.
#[derive(Debug, Clone)]
pub struct HeatStepper {
    grid: Arc<Grid>,
    laplacian: StencilMatrix,
    pub krylov: KrylovSettings,
}

impl HeatStepper {
    pub fn new(grid: Arc<Grid>) -> Self {
        let laplacian = neumann_laplacian(&grid);
        Self {
            grid,
            laplacian,
            krylov: KrylovSettings::default(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// One backward-Euler step of length `dt` from `u` (at `u.time()`).
    pub fn step(&self, u: &ScalarField, dt: f64, potential: &PotentialSpec) -> Result<ScalarField> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
        }
        let t_new = u.time() + dt;
        let mut m = self.laplacian.shifted_identity(-dt);
        if !potential.is_none() {
            let f = potential.sample(&self.grid, t_new);
            let neg = f.values().iter().fold(0.0f64, |m, &v| m.max(-v));
            if dt * neg >= 1.0 {
                return Err(Error::PositivityLoss {
                    time: t_new,
                    min: f64::NAN,
                });
            }
            for (d, fv) in m.diag.iter_mut().zip(f.values()) {
                *d += dt * fv;
            }
        }
        let values = if self.grid.dim() == 1 {
            solve_stencil_1d(&m, u.values())?
        } else {
            conjugate_gradient(&m, self.grid.weights(), u.values(), u.values(), self.krylov)?
        };
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure(format!(
                "non-finite value at node {node}"
            )));
        }
        let out = ScalarField::from_parts(self.grid.clone(), values, t_new);
        if !potential.is_none() {
            let min = out.min();
            if min <= 0.0 {
                return Err(Error::PositivityLoss { time: t_new, min });
            }
        }
        Ok(out)
    }
}

/// One backward-Euler step; see [`HeatStepper`] for repeated use.
pub fn step_heat(u: &ScalarField, dt: f64, potential: &PotentialSpec) -> Result<ScalarField> {
    HeatStepper::new(u.grid().clone()).step(u, dt, potential)
}

/// Solves forward from `u0` (taken at `params.t0`), storing the initial field
/// and every checkpoint, or every step when requested.
pub fn solve_heat(
    u0: &ScalarField,
    params: &SolverParams,
    potential: &PotentialSpec,
) -> Result<Trajectory> {
    params.validate()?;
    let (min, node) = u0.min_with_index();
    if min <= 0.0 {
        return Err(Error::NonPositiveShiftedField { min, node });
    }
    let stepper = HeatStepper::new(u0.grid().clone());
    let times = params.time_grid();
    let mut u = u0.clone().with_time(params.t0);
    let mut fields = vec![u.clone()];
    for w in times.windows(2) {
        let next = stepper.step(&u, w[1] - w[0], potential)?;
        u = next.with_time(w[1]);
        if params.store_every_step || params.is_checkpoint(w[1]) {
            fields.push(u.clone());
        }
    }
    Trajectory::new(
        fields,
        TrajectoryMeta {
            delta: None,
            potential: potential.id(),
            every_step: params.store_every_step,
        },
    )
}

/// Drift-free backward heat flow from `mu_tau` at `params.t_end` down to
/// `params.t0`, returned in increasing time order with every step stored.
pub fn solve_backward_heat(mu_tau: &ScalarField, params: &SolverParams) -> Result<Trajectory> {
    params.validate()?;
    let (min, node) = mu_tau.min_with_index();
    if min < 0.0 {
        return Err(Error::InvalidParams(format!(
            "terminal datum must be nonnegative, found {min} at node {node}"
        )));
    }
    let reversed = SolverParams {
        dt: params.dt,
        t0: params.t0,
        t_end: params.t_end,
        checkpoint_times: Vec::new(),
        store_every_step: true,
    };
    let times = reversed.time_grid();
    let stepper = HeatStepper::new(mu_tau.grid().clone());
    let none = PotentialSpec::none();
    let mut mu = mu_tau.clone().with_time(params.t_end);
    let mut fields = vec![mu.clone()];
    // Walk the same time grid from the top; the step lengths are mirrored.
    for k in (1..times.len()).rev() {
        let dt = times[k] - times[k - 1];
        mu = stepper.step(&mu, dt, &none)?.with_time(times[k - 1]);
        fields.push(mu.clone());
    }
    fields.reverse();
    Trajectory::new(
        fields,
        TrajectoryMeta {
            delta: None,
            potential: "none".into(),
            every_step: true,
        },
    )
}
