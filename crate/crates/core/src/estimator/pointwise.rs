use crate::calculus::{gradient, lp_norm};
use crate::error::{Error, Result};
use crate::fields::{ScalarField, Trajectory};

use super::{ensure_sup_bound, EstimateParams, LogFields, Margin};

/// Margin from a per-node slack field and the matching left-hand side.
fn field_margin(
    name: &str,
    family: &str,
    params: &EstimateParams,
    time: f64,
    slack: &ScalarField,
    lhs: &ScalarField,
) -> Margin {
    let (value, node) = slack.min_with_index();
    Margin::new(
        name,
        params.tau,
        time,
        value,
        Some(node),
        lhs.values()[node],
        params.tol(name, family),
    )
}

/// `min [Δv(τ) + n/(2τ)]`, `v = log(u+δ)`.
pub fn check_li_yau(traj: &Trajectory, params: &EstimateParams) -> Result<Margin> {
    let u = params.field_at(traj)?;
    let lf = LogFields::new(u, params.delta)?;
    let n = traj.grid().dim() as f64;
    let slack = lf.lap.map(|l| l + n / (2.0 * params.tau));
    Ok(field_margin("li_yau", "li_yau", params, u.time(), &slack, &lf.lap))
}

/// `min [λ_min(D²v(τ)) + 1/(2τ)]`.
pub fn check_hamilton(traj: &Trajectory, params: &EstimateParams) -> Result<Margin> {
    let u = params.field_at(traj)?;
    let lf = LogFields::new(u, params.delta)?;
    let slack = lf.lambda_min.map(|l| l + 1.0 / (2.0 * params.tau));
    Ok(field_margin(
        "hamilton",
        "hamilton",
        params,
        u.time(),
        &slack,
        &lf.lambda_min,
    ))
}

fn log_ratio(params: &EstimateParams, u: &ScalarField) -> ScalarField {
    let top = params.a_bound + params.delta;
    u.map(|x| (top / (x + params.delta)).ln())
}

/// `min [(1/τ) log((A+δ)/(u+δ)) − |Dv|²]`.
pub fn check_hsz_gradient(traj: &Trajectory, params: &EstimateParams) -> Result<Margin> {
    ensure_sup_bound(traj, params.a_bound)?;
    let u = params.field_at(traj)?;
    let lf = LogFields::new(u, params.delta)?;
    let slack = log_ratio(params, u).zip_map(&lf.grad_sq, |l, g| l / params.tau - g);
    Ok(field_margin(
        "hsz_gradient",
        "hsz_gradient",
        params,
        u.time(),
        &slack,
        &lf.grad_sq,
    ))
}

/// Oscillation gradient bound `min [(sup u(0)² − u²)/(2τ) − |Du|²]`, and the
/// Bernstein field bound `½ sup u(0)² − max (τ|Du|² + u²/2)`.
pub fn check_oscillation_gradient(
    traj: &Trajectory,
    params: &EstimateParams,
) -> Result<(Margin, Margin)> {
    let u = params.field_at(traj)?;
    let sup0 = traj.initial().values().iter().fold(0.0f64, |m, v| m.max(v * v));
    let du = gradient(u)?.norm_sq();
    let tau = params.tau;
    let slack = u.zip_map(&du, |x, g| (sup0 - x * x) / (2.0 * tau) - g);
    let osc = field_margin(
        "oscillation_gradient",
        "oscillation_gradient",
        params,
        u.time(),
        &slack,
        &du,
    );
    let g = u.zip_map(&du, |x, d| tau * d + 0.5 * x * x);
    let (gmax, node) = g.max_with_index();
    let bern = Margin::new(
        "bernstein",
        tau,
        u.time(),
        0.5 * sup0 - gmax,
        Some(node),
        gmax,
        params.tol("bernstein", "oscillation_gradient"),
    );
    Ok((osc, bern))
}

/// `½ ‖u(0)‖_p² − τ ‖|Du(τ)|‖_p²` for `p ∈ [2, ∞]`.
pub fn check_lp_smoothing(traj: &Trajectory, params: &EstimateParams) -> Result<Margin> {
    let p = params.p;
    if !(p >= 2.0) {
        return Err(Error::InvalidExponent(p));
    }
    let u = params.field_at(traj)?;
    let du = gradient(u)?.magnitude();
    let lhs = params.tau * lp_norm(&du, p)?.powi(2);
    let rhs = 0.5 * lp_norm(traj.initial(), p)?.powi(2);
    let name = lp_name(p);
    Ok(Margin::new(
        name.clone(),
        params.tau,
        u.time(),
        rhs - lhs,
        None,
        lhs,
        params.tol(&name, "lp_smoothing"),
    ))
}

pub(crate) fn lp_name(p: f64) -> String {
    if p.is_infinite() {
        "lp_smoothing_pinf".into()
    } else {
        format!("lp_smoothing_p{p}")
    }
}

/// Reversed estimate `min [(1/τ)(n + (7/2) log((A+δ)/(u+δ))) − Δv − 2|Dv|²]`
/// and the intermediate bound `min [(3/(2τ)) log((A+δ)/(u+δ)) + n/τ − Δv]`.
pub fn check_reversed(traj: &Trajectory, params: &EstimateParams) -> Result<(Margin, Margin)> {
    ensure_sup_bound(traj, params.a_bound)?;
    let u = params.field_at(traj)?;
    let lf = LogFields::new(u, params.delta)?;
    let n = traj.grid().dim() as f64;
    let tau = params.tau;
    let ratio = log_ratio(params, u);
    let lhs = lf.lap.zip_map(&lf.grad_sq, |l, g| l + 2.0 * g);
    let slack = ratio.zip_map(&lhs, |r, l| (n + 3.5 * r) / tau - l);
    let main = field_margin("reversed", "reversed", params, u.time(), &slack, &lhs);
    let slack_mid = ratio.zip_map(&lf.lap, |r, l| 1.5 * r / tau + n / tau - l);
    let mid = field_margin(
        "reversed_intermediate",
        "reversed",
        params,
        u.time(),
        &slack_mid,
        &lf.lap,
    );
    Ok((main, mid))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::estimator::Tolerances;
    use crate::fields::TrajectoryMeta;
    use crate::grid::{BoxDomain, Grid};

    fn constant_traj(c: f64, dim: usize) -> Trajectory {
        let cells = vec![16; dim];
        let g = Arc::new(Grid::new(BoxDomain::unit(dim).unwrap(), &cells).unwrap());
        let fields = [0.0, 0.1]
            .iter()
            .map(|&t| ScalarField::constant(g.clone(), c, t).unwrap())
            .collect();
        Trajectory::new(fields, TrajectoryMeta::default()).unwrap()
    }

    fn params(traj: &Trajectory) -> EstimateParams {
        EstimateParams::certify(traj, 0.1, 0.0, 2.0, Tolerances::fixed(1e-12)).unwrap()
    }

    #[test]
    fn constants_give_the_trivial_margins() {
        for dim in [1, 2] {
            let t = constant_traj(3.0, dim);
            let p = params(&t);
            let n = dim as f64;
            assert!((check_li_yau(&t, &p).unwrap().value - n / 0.2).abs() < 1e-12);
            assert!((check_hamilton(&t, &p).unwrap().value - 5.0).abs() < 1e-12);
            assert!(check_hsz_gradient(&t, &p).unwrap().value.abs() < 1e-12);
            let (osc, bern) = check_oscillation_gradient(&t, &p).unwrap();
            assert!(osc.value.abs() < 1e-12 && bern.value.abs() < 1e-12);
            let lp = check_lp_smoothing(&t, &p).unwrap();
            assert!((lp.value - 4.5).abs() < 1e-12);
            let (rev, _) = check_reversed(&t, &p).unwrap();
            assert!((rev.value - n / 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_checkpoint_and_bad_bound() {
        let t = constant_traj(1.0, 1);
        let p = params(&t).with_tau(0.05);
        assert!(matches!(
            check_li_yau(&t, &p),
            Err(Error::CheckpointMissing(_))
        ));
        let mut p = params(&t);
        p.a_bound = 0.5;
        assert!(matches!(
            check_hsz_gradient(&t, &p),
            Err(Error::SupBoundViolated { .. })
        ));
        assert!(matches!(
            check_lp_smoothing(&t, &params(&t).with_p(1.5)),
            Err(Error::InvalidExponent(_))
        ));
    }
}
