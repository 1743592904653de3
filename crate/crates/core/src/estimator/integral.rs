use crate::adjoint::AdjointRun;
use crate::calculus::{gradient, hessian, hopf_cole, lp_norm};
use crate::error::{Error, Result};
use crate::fields::{ScalarField, Trajectory};

use super::{ensure_sup_bound, EstimateParams, Margin};

const MASS_TOL: f64 = 1e-9;

/// Fields of `traj` at the stored times of `run`, which must cover exactly
/// `[t0, t0 + τ]`.
pub(crate) fn aligned<'a>(
    traj: &'a Trajectory,
    run: &AdjointRun,
    params: &EstimateParams,
) -> Result<Vec<&'a ScalarField>> {
    let times = run.times();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
    if !close(times[0], traj.t0()) || !close(*times.last().unwrap(), params.checkpoint(traj)) {
        return Err(Error::DriftMismatch(format!(
            "adjoint run spans [{}, {}], expected [{}, {}]",
            times[0],
            times.last().unwrap(),
            traj.t0(),
            params.checkpoint(traj)
        )));
    }
    times
        .iter()
        .map(|&t| {
            traj.index_of(t)
                .map(|k| &traj.fields()[k])
                .ok_or_else(|| Error::DriftMismatch(format!("no trajectory field at t = {t}")))
        })
        .collect()
}

/// `∫∫ f ρ` by the trapezoid rule over the run's stored times, where `f` is
/// evaluated per stored field with its time.
pub(crate) fn space_time_integral(
    run: &AdjointRun,
    fields: &[&ScalarField],
    f: impl Fn(&ScalarField, f64) -> Result<ScalarField>,
) -> Result<f64> {
    let times = run.times();
    let mut vals = Vec::with_capacity(times.len());
    for (k, u) in fields.iter().enumerate() {
        vals.push(f(u, times[k])?.dot(&run.rho.fields()[k]));
    }
    Ok((1..times.len())
        .map(|k| 0.5 * (times[k] - times[k - 1]) * (vals[k] + vals[k - 1]))
        .sum())
}

fn ensure_unit_mass(run: &AdjointRun) -> Result<()> {
    let m = run.terminal.integral();
    if (m - 1.0).abs() > MASS_TOL {
        return Err(Error::MassNotUnit(m));
    }
    Ok(())
}

fn ensure_drift_matches(run: &AdjointRun, params: &EstimateParams) -> Result<()> {
    match run.drift_delta {
        Some(d) if (d - params.delta).abs() <= 1e-12 * params.delta.abs().max(1e-300) => Ok(()),
        Some(d) => Err(Error::DriftMismatch(format!(
            "run drift used delta = {d}, estimate uses {}",
            params.delta
        ))),
        None => Err(Error::DriftMismatch(
            "run drift was not built from a log trajectory".into(),
        )),
    }
}

/// Duality form of the gradient bound against one adjoint run with drift
/// `2Dv`.
///
/// Returns the identity residual `|∬|Dv|²ρ + ∫v(τ)ρ_τ − ∫v(0)ρ(0)|` as the
/// margin `−r`, and the inequality margin
/// `∫ log((A+δ)/(u(τ)+δ)) ρ_τ − ∬|Dv|²ρ`.
pub fn check_crossed_term(
    traj: &Trajectory,
    run: &AdjointRun,
    params: &EstimateParams,
) -> Result<(Margin, Margin)> {
    ensure_drift_matches(run, params)?;
    ensure_unit_mass(run)?;
    ensure_sup_bound(traj, params.a_bound)?;
    let fields = aligned(traj, run, params)?;
    let delta = params.delta;
    let cross = space_time_integral(run, &fields, |u, _| {
        Ok(gradient(&hopf_cole(u, delta)?)?.norm_sq())
    })?;
    let rho = run.rho.fields();
    let u_tau = *fields.last().unwrap();
    let v_tau = hopf_cole(u_tau, delta)?;
    let v_0 = hopf_cole(fields[0], delta)?;
    let residual = (cross + v_tau.dot(&run.terminal) - v_0.dot(&rho[0])).abs();
    let top = params.a_bound + delta;
    let bound = u_tau.map(|x| (top / (x + delta)).ln()).dot(&run.terminal);
    let time = u_tau.time();
    Ok((
        Margin::new(
            "crossed_identity",
            params.tau,
            time,
            -residual,
            None,
            cross,
            params.tol("crossed_identity", "crossed_term"),
        ),
        Margin::new(
            "crossed_inequality",
            params.tau,
            time,
            bound - cross,
            None,
            cross,
            params.tol("crossed_inequality", "crossed_term"),
        ),
    ))
}

/// Result of the second-order duality bound against one adjoint run.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralHessian {
    /// `∫(log((A+δ)/(u(τ)+δ)) − τ|Dv(τ)|²)ρ_τ − ∬ 2t|D²v|²ρ`
    pub margin: Margin,
    /// `∬ 2t|D²v|²ρ`, with `t` the elapsed time.
    pub hessian_term: f64,
    /// `sup_y (log((A+δ)/(u(y,τ)+δ)) − τ|Dv(y,τ)|²)`
    pub sup_rhs: f64,
}

pub fn check_integral_hessian(
    traj: &Trajectory,
    run: &AdjointRun,
    params: &EstimateParams,
) -> Result<IntegralHessian> {
    ensure_drift_matches(run, params)?;
    ensure_unit_mass(run)?;
    ensure_sup_bound(traj, params.a_bound)?;
    let fields = aligned(traj, run, params)?;
    let delta = params.delta;
    let t0 = traj.t0();
    let hess = space_time_integral(run, &fields, |u, t| {
        Ok(hessian(&hopf_cole(u, delta)?)?
            .frobenius_sq()
            .scaled(2.0 * (t - t0)))
    })?;
    let u_tau = *fields.last().unwrap();
    let grad_sq = gradient(&hopf_cole(u_tau, delta)?)?.norm_sq();
    let top = params.a_bound + delta;
    let rhs_field = u_tau
        .map(|x| (top / (x + delta)).ln())
        .zip_map(&grad_sq, |l, g| l - params.tau * g);
    let rhs = rhs_field.dot(&run.terminal);
    Ok(IntegralHessian {
        margin: Margin::new(
            "hsz2",
            params.tau,
            u_tau.time(),
            rhs - hess,
            None,
            hess,
            params.tol("hsz2", "integral_hessian"),
        ),
        hessian_term: hess,
        sup_rhs: rhs_field.max(),
    })
}

/// `½ ‖u(0)‖_p² − ∬ 2t|D²u|²μ` for a drift-free backward run `μ` with
/// `‖μ_τ‖_{(p/2)'} = 1`.
pub fn check_second_order_bernstein(
    traj: &Trajectory,
    mu: &AdjointRun,
    params: &EstimateParams,
) -> Result<Margin> {
    let p = params.p;
    if !(p >= 2.0) {
        return Err(Error::InvalidExponent(p));
    }
    if !mu.is_drift_free() {
        return Err(Error::DriftMismatch(format!(
            "second-order bound needs a drift-free run, drift bound is {}",
            mu.drift_bound
        )));
    }
    let q = if p == 2.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 2.0)
    };
    let norm = lp_norm(&mu.terminal, q)?;
    if (norm - 1.0).abs() > MASS_TOL {
        return Err(Error::MassNotUnit(norm));
    }
    let fields = aligned(traj, mu, params)?;
    let t0 = traj.t0();
    let hess = space_time_integral(mu, &fields, |u, t| {
        Ok(hessian(u)?.frobenius_sq().scaled(2.0 * (t - t0)))
    })?;
    let rhs = 0.5 * lp_norm(traj.initial(), p)?.powi(2);
    let name = if p.is_infinite() {
        "second_b_pinf".to_string()
    } else {
        format!("second_b_p{p}")
    };
    Ok(Margin::new(
        name.clone(),
        params.tau,
        fields.last().unwrap().time(),
        rhs - hess,
        None,
        hess,
        params.tol(&name, "integral_hessian"),
    ))
}
