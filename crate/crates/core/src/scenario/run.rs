use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::adjoint::{bump_centers, cosine_bump, solve_backward_fp, AdjointRun, DriftSampler};
use crate::calculus::{hopf_cole, lp_norm};
use crate::error::{Error, Result};
use crate::estimator::{
    check_convexity_preservation, check_crossed_term, check_hamilton, check_hsz_gradient,
    check_integral_hessian, check_k0k, check_li_yau, check_lp_smoothing,
    check_oscillation_gradient, check_reversed, check_second_order_bernstein, worst_of,
    CalibrationTable, ConvexityMode, EstimateParams, LogFields, Margin, PotentialConstants,
    Tolerances,
};
use crate::fields::{ScalarField, Trajectory};
use crate::heat::{solve_heat, SolverParams};

use super::config::{ScenarioConfig, DEFAULT_DELTA_FACTOR, MAX_CELLS_1D, MAX_CELLS_2D};
use super::report::{
    CheckRecord, ConvergenceOrder, DeltaStability, Diagnostics, EstimateReport, PlotRow,
    TailDiagnostic,
};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub table: CalibrationTable,
    pub plot_data: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            table: CalibrationTable::shipped(),
            plot_data: false,
        }
    }
}

/// Runs the full pipeline with the shipped calibration table.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<EstimateReport> {
    run_scenario_with(cfg, &RunOptions::default())
}

pub fn run_scenario_with(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<EstimateReport> {
    let wrap = |e: Error| Error::Scenario {
        id: cfg.id.clone(),
        source: Box::new(e),
    };
    let start = Instant::now();
    cfg.validate().map_err(wrap)?;
    let mut report = execute(cfg, opts, None).map_err(wrap)?;
    if cfg.diagnostics.convergence_levels >= 3 {
        report.diagnostics.convergence =
            convergence_study(cfg, opts, report.diagnostics.delta, &report).map_err(wrap)?;
    }
    report.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

struct Recorder {
    checks: Vec<CheckRecord>,
}

impl Recorder {
    fn timed<T>(&mut self, f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
        let t = Instant::now();
        let out = f()?;
        Ok((out, t.elapsed().as_secs_f64() * 1e3))
    }

    fn push(&mut self, margin: Margin, runtime_ms: f64) {
        self.checks.push(CheckRecord { margin, runtime_ms });
    }
}

/// Worst margin over bump runs, located at the node of the bump centre.
fn worst_over_bumps(margins: Vec<Margin>, centers: &[usize]) -> Option<Margin> {
    let tagged = margins.into_iter().zip(centers).map(|(mut m, &c)| {
        m.node = Some(c);
        m
    });
    worst_of(tagged)
}

fn execute(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    fixed_delta: Option<f64>,
) -> Result<EstimateReport> {
    let grid = cfg.build_grid()?;
    let sp = cfg.solver_params()?;
    let u0 = cfg.initial.sample(&grid, sp.t0, cfg.seed)?;
    let delta = fixed_delta
        .or(cfg.delta)
        .unwrap_or(DEFAULT_DELTA_FACTOR * u0.max());
    let mut traj = solve_heat(&u0, &sp, &cfg.potential)?;
    traj.meta.delta = Some(delta);

    let mut tolerances = Tolerances::new(opts.table.clone(), grid.h_max(), sp.dt, delta);
    for (k, v) in &cfg.estimates.tolerances {
        tolerances = tolerances.with_override(k.clone(), *v);
    }
    let first_tau = sp.checkpoint_times[0] - sp.t0;
    let base = EstimateParams::certify(&traj, first_tau, delta, 2.0, tolerances)?;
    let modes = cfg.convexity_modes()?;
    let convexity = cfg.selects("convexity");
    let wants_k0k = convexity && modes.contains(&ConvexityMode::PotentialC);
    let need_adjoint =
        cfg.selects("crossed_term") || cfg.selects("integral_hessian") || wants_k0k;

    let mut diag = Diagnostics {
        delta,
        a_bound: base.a_bound,
        min_u: traj
            .fields()
            .iter()
            .map(|f| f.min())
            .fold(f64::INFINITY, f64::min),
        heat_mass_drift: cfg.potential.is_none().then(|| {
            let m0 = traj.initial().integral();
            traj.fields()
                .iter()
                .map(|f| (f.integral() - m0).abs() / m0.abs())
                .fold(0.0, f64::max)
        }),
        ..Diagnostics::default()
    };

    let drift = if need_adjoint {
        let mut v = traj.map_fields(|f| hopf_cole(f, delta))?;
        v.meta.delta = Some(delta);
        let d = DriftSampler::from_log_trajectory(&v)?;
        diag.drift_bound = Some(d.bound());
        Some(d)
    } else {
        None
    };
    let radius = cfg.adjoint.radius.unwrap_or_else(|| {
        0.1 * (0..grid.dim())
            .map(|k| grid.domain().length(k))
            .fold(f64::INFINITY, f64::min)
    });
    let center_pts = bump_centers(&grid, cfg.adjoint.bumps, cfg.adjoint.span);
    let center_nodes: Vec<usize> = center_pts.iter().map(|c| nearest_node(&grid, *c)).collect();
    let bumps: Vec<ScalarField> = if need_adjoint {
        center_pts
            .iter()
            .map(|c| cosine_bump(&grid, *c, radius))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut rec = Recorder { checks: Vec::new() };
    let mut adjoint_drift = 0.0f64;
    let mut adjoint_min = f64::INFINITY;
    for &checkpoint in &sp.checkpoint_times {
        let tau = checkpoint - sp.t0;
        let params = base.with_tau(tau);

        if cfg.selects("li_yau") {
            let (m, ms) = rec.timed(|| check_li_yau(&traj, &params))?;
            rec.push(m, ms);
        }
        if cfg.selects("hamilton") {
            let (m, ms) = rec.timed(|| check_hamilton(&traj, &params))?;
            rec.push(m, ms);
        }
        if cfg.selects("hsz_gradient") {
            let (m, ms) = rec.timed(|| check_hsz_gradient(&traj, &params))?;
            rec.push(m, ms);
        }
        if cfg.selects("oscillation_gradient") {
            let ((osc, bern), ms) = rec.timed(|| check_oscillation_gradient(&traj, &params))?;
            rec.push(osc, ms);
            rec.push(bern, ms);
        }
        if cfg.selects("lp_smoothing") {
            for &p in &cfg.estimates.lp_exponents {
                let (m, ms) = rec.timed(|| check_lp_smoothing(&traj, &params.with_p(p)))?;
                rec.push(m, ms);
            }
        }
        if cfg.selects("reversed") {
            let ((main, mid), ms) = rec.timed(|| check_reversed(&traj, &params))?;
            rec.push(main, ms);
            rec.push(mid, ms);
        }

        let window = SolverParams {
            dt: sp.dt,
            t0: sp.t0,
            t_end: checkpoint,
            checkpoint_times: sp
                .checkpoint_times
                .iter()
                .copied()
                .filter(|&c| c <= checkpoint)
                .collect(),
            store_every_step: true,
        };
        let potential_constants = if convexity && modes.iter().any(|m| m.needs_potential_constants())
        {
            let times: Vec<f64> = traj
                .times()
                .iter()
                .copied()
                .filter(|&t| t <= checkpoint * (1.0 + 1e-12))
                .collect();
            Some(PotentialConstants::certify(
                &traj,
                &cfg.potential,
                &grid,
                &times,
                delta,
            )?)
        } else {
            None
        };

        if let Some(drift) = &drift {
            let t = Instant::now();
            let mut runs: Vec<AdjointRun> = bumps
                .par_iter()
                .map(|b| solve_backward_fp(b, drift, &window))
                .collect::<Result<_>>()?;
            let run_ms = t.elapsed().as_secs_f64() * 1e3;
            for r in &runs {
                adjoint_drift = adjoint_drift.max(r.mass_drift());
                adjoint_min = adjoint_min.min(r.min_value);
            }
            diag.adjoint_runs += runs.len();
            if let Some(first) = runs.first_mut() {
                if !cfg.adjoint.tail_radii.is_empty() {
                    first.record_tails(&cfg.adjoint.tail_radii)?;
                    for rec in &first.tail_log {
                        diag.tails.push(TailDiagnostic {
                            tau,
                            radius: rec.radius,
                            at_start: rec.values[0],
                            at_terminal: *rec.values.last().unwrap(),
                        });
                    }
                }
            }
            if cfg.selects("crossed_term") {
                let (pairs, ms) = rec.timed(|| {
                    runs.iter()
                        .map(|r| check_crossed_term(&traj, r, &params))
                        .collect::<Result<Vec<_>>>()
                })?;
                let (ids, ineqs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
                for m in [ids, ineqs]
                    .into_iter()
                    .filter_map(|ms| worst_over_bumps(ms, &center_nodes))
                {
                    rec.push(m, ms + run_ms);
                }
            }
            if cfg.selects("integral_hessian") {
                let (items, ms) = rec.timed(|| {
                    runs.iter()
                        .map(|r| check_integral_hessian(&traj, r, &params))
                        .collect::<Result<Vec<_>>>()
                })?;
                let sup_rhs = items.iter().map(|i| i.sup_rhs).fold(f64::NEG_INFINITY, f64::max);
                let best = items
                    .iter()
                    .map(|i| i.hessian_term)
                    .fold(f64::NEG_INFINITY, f64::max);
                let margins: Vec<Margin> = items.into_iter().map(|i| i.margin).collect();
                let time = margins.first().map(|m| m.time).unwrap_or(checkpoint);
                if let Some(m) = worst_over_bumps(margins, &center_nodes) {
                    rec.push(m, ms + run_ms);
                }
                if !runs.is_empty() {
                    rec.push(
                        Margin::new(
                            "hsz2_sup",
                            tau,
                            time,
                            sup_rhs - best,
                            None,
                            best,
                            params.tolerances.for_check("hsz2_sup", "integral_hessian"),
                        ),
                        ms,
                    );
                }
                for &p in &cfg.estimates.lp_exponents {
                    let (m, ms) = rec.timed(|| second_b(&traj, &bumps, &window, &params.with_p(p)))?;
                    if let Some(m) = worst_over_bumps(m, &center_nodes) {
                        rec.push(m, ms);
                    }
                }
            }
            if wants_k0k {
                let pc = potential_constants.as_ref().expect("certified above");
                let (ms_, ms) = rec.timed(|| {
                    runs.iter()
                        .map(|r| check_k0k(&traj, r, &params, pc))
                        .collect::<Result<Vec<_>>>()
                })?;
                if let Some(m) = worst_over_bumps(ms_, &center_nodes) {
                    rec.push(m, ms + run_ms);
                }
            }
        }

        if convexity {
            for &mode in &modes {
                let (m, ms) = rec.timed(|| {
                    check_convexity_preservation(
                        &traj,
                        &params,
                        mode,
                        potential_constants.as_ref(),
                    )
                })?;
                rec.push(m, ms);
            }
        }

        if cfg.estimates.delta_stability {
            diag.delta_stability
                .extend(delta_stability(cfg, &traj, &params, delta)?);
        }
    }
    if drift.is_some() {
        diag.adjoint_mass_drift = Some(adjoint_drift);
        diag.adjoint_min = Some(adjoint_min);
    }

    let plot = if opts.plot_data {
        plot_rows(cfg, &traj, &sp, delta)?
    } else {
        Vec::new()
    };
    Ok(EstimateReport {
        scenario_id: cfg.id.clone(),
        config_hash: cfg.hash(),
        calibration_version: opts.table.version.clone(),
        checks: rec.checks,
        diagnostics: diag,
        runtime_ms: 0.0,
        plot,
    })
}

fn nearest_node(grid: &crate::grid::Grid, x: [f64; 2]) -> usize {
    let mut ij = [0usize; 2];
    for (axis, slot) in ij.iter_mut().enumerate().take(grid.dim()) {
        let s = (x[axis] - grid.domain().lower()[axis]) / grid.h()[axis];
        *slot = (s.round().max(0.0) as usize).min(grid.n_cells()[axis]);
    }
    grid.index(ij[0], ij[1])
}

/// Drift-free runs from each bump scaled to unit `L^{(p/2)'}` norm.
fn second_b(
    traj: &Trajectory,
    bumps: &[ScalarField],
    window: &SolverParams,
    params: &EstimateParams,
) -> Result<Vec<Margin>> {
    let p = params.p;
    let q = if p == 2.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 2.0)
    };
    bumps
        .par_iter()
        .map(|b| {
            let mu_tau = b.scaled(1.0 / lp_norm(b, q)?);
            let mu = solve_backward_fp(&mu_tau, &DriftSampler::zero(), window)?;
            check_second_order_bernstein(traj, &mu, params)
        })
        .collect()
}

fn delta_stability(
    cfg: &ScenarioConfig,
    traj: &Trajectory,
    params: &EstimateParams,
    delta: f64,
) -> Result<Vec<DeltaStability>> {
    let mut tenth = params.clone();
    tenth.delta = delta / 10.0;
    let mut out = Vec::new();
    type Check = fn(&Trajectory, &EstimateParams) -> Result<Margin>;
    let checks: [(&str, Check); 4] = [
        ("li_yau", check_li_yau),
        ("hamilton", check_hamilton),
        ("hsz_gradient", check_hsz_gradient),
        ("reversed", |t, p| check_reversed(t, p).map(|(m, _)| m)),
    ];
    for (name, check) in checks {
        if !cfg.selects(name) {
            continue;
        }
        let a = check(traj, params)?.value;
        let b = check(traj, &tenth)?.value;
        out.push(DeltaStability {
            name: name.into(),
            tau: params.tau,
            margin: a,
            margin_tenth_delta: b,
            difference: (a - b).abs(),
        });
    }
    Ok(out)
}

fn plot_rows(
    cfg: &ScenarioConfig,
    traj: &Trajectory,
    sp: &SolverParams,
    delta: f64,
) -> Result<Vec<PlotRow>> {
    let mut rows = Vec::new();
    for &c in &sp.checkpoint_times {
        let u = traj.at(c)?;
        let lf = LogFields::new(u, delta)?;
        let g = traj.grid();
        for i in 0..g.node_count() {
            let x = g.coords(i);
            rows.push(PlotRow {
                scenario_id: cfg.id.clone(),
                time: c,
                tau: c - sp.t0,
                node: i,
                x: x[0],
                y: (g.dim() == 2).then_some(x[1]),
                u: u.values()[i],
                log_u: lf.v.values()[i],
                grad_sq: lf.grad_sq.values()[i],
                lap_log_u: lf.lap.values()[i],
                lambda_min: lf.lambda_min.values()[i],
                lambda_max: lf.lambda_max.values()[i],
            });
        }
    }
    Ok(rows)
}

/// Reruns at halved `h` and `dt` and estimates the order of each margin.
fn convergence_study(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    delta: f64,
    base: &EstimateReport,
) -> Result<Vec<ConvergenceOrder>> {
    let cap = if cfg.dim() == 1 { MAX_CELLS_1D } else { MAX_CELLS_2D };
    let mut levels = vec![base.clone()];
    let mut level_cfg = cfg.clone();
    level_cfg.diagnostics.convergence_levels = 0;
    level_cfg.estimates.delta_stability = false;
    for _ in 1..cfg.diagnostics.convergence_levels {
        level_cfg.grid.cells = level_cfg.grid.cells.iter().map(|c| c * 2).collect();
        if level_cfg.grid.cells.iter().any(|&c| c > cap) {
            break;
        }
        level_cfg.solver.dt = Some(level_cfg.dt() / 2.0);
        let quiet = RunOptions {
            plot_data: false,
            ..opts.clone()
        };
        levels.push(execute(&level_cfg, &quiet, Some(delta))?);
    }
    let mut by_key: BTreeMap<(usize, String), ConvergenceOrder> = BTreeMap::new();
    for (pos, c) in base.checks.iter().enumerate() {
        let m = &c.margin;
        let values: Vec<f64> = levels
            .iter()
            .filter_map(|r| r.margin(&m.name, m.tau).map(|x| x.value))
            .collect();
        let observed_order = (values.len() >= 3).then(|| {
            let a = (values[0] - values[1]).abs();
            let b = (values[1] - values[2]).abs();
            (a / b).log2()
        });
        by_key.insert(
            (pos, m.name.clone()),
            ConvergenceOrder {
                name: m.name.clone(),
                tau: m.tau,
                values,
                observed_order: observed_order.filter(|o| o.is_finite()),
            },
        );
    }
    Ok(by_key.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoxDomain, Grid};

    #[test]
    fn bump_margins_are_located_at_their_centres() {
        let m = |v: f64| Margin::new("hsz2", 0.1, 0.1, v, None, 0.0, 0.0);
        let w = worst_over_bumps(vec![m(1.0), m(-2.0), m(-2.0)], &[4, 9, 11]).unwrap();
        assert_eq!(w.node, Some(9));
        assert!(worst_over_bumps(Vec::new(), &[]).is_none());
    }

    #[test]
    fn nearest_node_rounds_to_the_grid() {
        let g = Grid::new(BoxDomain::unit(2).unwrap(), &[10, 8]).unwrap();
        assert_eq!(nearest_node(&g, [0.31, 0.49]), g.index(3, 4));
        assert_eq!(nearest_node(&g, [2.0, -1.0]), g.index(10, 0));
    }
}
