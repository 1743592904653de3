use std::f64::consts::PI;
use std::sync::Arc;

use harnack_lab::adjoint::{bump_centers, cosine_bump, solve_backward_fp, DriftSampler};
use harnack_lab::calculus::hopf_cole;
use harnack_lab::estimator::{
    check_convexity_preservation, check_crossed_term, check_hamilton, check_hsz_gradient,
    check_integral_hessian, check_li_yau, check_lp_smoothing, check_oscillation_gradient,
    check_reversed, ConvexityMode, EstimateParams, Tolerances,
};
use harnack_lab::fields::{ScalarField, Trajectory};
use harnack_lab::grid::{BoxDomain, Grid};
use harnack_lab::heat::{solve_heat, SolverParams};
use harnack_lab::potential::PotentialSpec;
use proptest::prelude::*;

const DELTA: f64 = 1e-12;

fn flow(grid: Arc<Grid>, t0: f64, t_end: f64, checkpoints: Vec<f64>, dt: f64, f: impl Fn([f64; 2]) -> f64) -> Trajectory {
    let u0 = ScalarField::from_fn(grid, t0, f).unwrap();
    let sp = SolverParams::new(dt, t0, t_end, checkpoints).unwrap().every_step(true);
    solve_heat(&u0, &sp, &PotentialSpec::none()).unwrap()
}

fn params(traj: &Trajectory, tau: f64) -> EstimateParams {
    EstimateParams::certify(traj, tau, DELTA, 2.0, Tolerances::fixed(0.0)).unwrap()
}

fn cosine_trajectory(n: usize, dt: f64) -> Trajectory {
    let g = Arc::new(Grid::new(BoxDomain::unit(1).unwrap(), &[n]).unwrap());
    flow(g, 0.0, 0.2, vec![0.1, 0.2], dt, |x| 2.0 + (PI * x[0]).cos())
}

/// `Δ log u` for `u = 2 + e^{−π²t} cos πx`.
fn cosine_log_laplacian(x: f64, t: f64) -> f64 {
    let e = (-PI * PI * t).exp();
    let u = 2.0 + e * (PI * x).cos();
    let ux = -PI * e * (PI * x).sin();
    let uxx = -PI * PI * e * (PI * x).cos();
    uxx / u - (ux / u).powi(2)
}

fn dense_min(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (0..=20_000).map(|k| f(a + (b - a) * k as f64 / 20_000.0)).fold(f64::INFINITY, f64::min)
}

#[test]
fn li_yau_on_cosine_data_matches_the_separable_oracle() {
    let traj = cosine_trajectory(512, 2.5e-4);
    for tau in [0.1, 0.2] {
        let m = check_li_yau(&traj, &params(&traj, tau)).unwrap();
        let oracle = dense_min(|x| cosine_log_laplacian(x, tau) + 0.5 / tau, 0.0, 1.0);
        assert!(oracle > 0.0);
        assert!((m.value - oracle).abs() < 2e-3, "tau {tau}: {} vs {oracle}", m.value);
    }
}

#[test]
fn lp_smoothing_on_cosine_data_matches_analytic_integrals() {
    let traj = cosine_trajectory(512, 2.5e-4);
    let m = check_lp_smoothing(&traj, &params(&traj, 0.1)).unwrap();
    let oracle = 2.25 - 0.1 * PI * PI * (-2.0 * PI * PI * 0.1).exp() / 2.0;
    assert!((m.value - oracle).abs() < 2e-3, "{} vs {oracle}", m.value);
    let (osc, bern) = check_oscillation_gradient(&traj, &params(&traj, 0.1)).unwrap();
    assert!(osc.value > 0.0 && bern.value > 0.0);
}

fn gaussian_trajectory(n: usize, dt: f64, t0: f64, tau: f64) -> Trajectory {
    let g = Arc::new(Grid::new(BoxDomain::truncated(1, 8.0).unwrap(), &[n]).unwrap());
    flow(g, t0, t0 + tau, vec![t0 + tau], dt, |x| {
        (-x[0] * x[0] / (4.0 * t0)).exp() / (4.0 * PI * t0).sqrt()
    })
}

#[test]
fn hsz_gradient_on_a_shifted_gaussian_matches_its_closed_form() {
    let (t0, tau) = (0.1, 0.25);
    let traj = gaussian_trajectory(1024, 2.5e-4, t0, tau);
    let m = check_hsz_gradient(&traj, &params(&traj, tau)).unwrap();
    // minimum sits at the origin: (n/(2τ)) log((t0+τ)/t0)
    let oracle = 0.5 / tau * ((t0 + tau) / t0).ln();
    assert!((m.value - oracle).abs() < 5e-3, "{} vs {oracle}", m.value);
}

#[test]
fn reversed_on_a_shifted_gaussian_matches_its_closed_form() {
    let (t0, tau) = (0.1, 0.25);
    let s = t0 + tau;
    let traj = gaussian_trajectory(1024, 2.5e-4, t0, tau);
    let (m, mid) = check_reversed(&traj, &params(&traj, tau)).unwrap();
    let log_ratio = |x: f64| 0.5 * (s / t0).ln() + x * x / (4.0 * s);
    let oracle = dense_min(
        |x| (1.0 + 3.5 * log_ratio(x)) / tau - (-0.5 / s + 2.0 * x * x / (4.0 * s * s)),
        -1.0,
        1.0,
    );
    assert!((m.value - oracle).abs() < 2e-2, "{} vs {oracle}", m.value);
    assert!(mid.value > 0.0);
}

#[test]
fn hamilton_on_a_two_bump_mixture_matches_dense_evaluation() {
    let comps = [(1.0, -0.8, 0.05), (0.6, 0.7, 0.08)];
    let mixture = |x: f64, t: f64| -> (f64, f64, f64) {
        let mut u = (0.0, 0.0, 0.0);
        for &(w, c, s) in &comps {
            let s = s + t;
            let k = w * (-(x - c).powi(2) / (4.0 * s)).exp() / (4.0 * PI * s).sqrt();
            let d = -(x - c) / (2.0 * s);
            u.0 += k;
            u.1 += k * d;
            u.2 += k * (d * d - 1.0 / (2.0 * s));
        }
        u
    };
    let g = Arc::new(Grid::new(BoxDomain::truncated(1, 6.0).unwrap(), &[1024]).unwrap());
    let tau = 0.2;
    let traj = flow(g, 0.0, tau, vec![tau], 1e-4, |x| mixture(x[0], 0.0).0);
    let m = check_hamilton(&traj, &params(&traj, tau)).unwrap();
    let oracle = dense_min(
        |x| {
            let (u, ux, uxx) = mixture(x, tau);
            uxx / u - (ux / u).powi(2) + 0.5 / tau
        },
        -3.0,
        3.0,
    );
    assert!(oracle >= 0.0);
    assert!((m.value - oracle).abs() < 1e-2, "{} vs {oracle}", m.value);
}

#[test]
fn convexity_on_log_quadratic_data_keeps_the_initial_constant() {
    let q = 1.5;
    let g = Arc::new(Grid::new(BoxDomain::truncated(1, 8.0).unwrap(), &[512]).unwrap());
    let traj = flow(g, 0.0, 0.3, vec![0.1, 0.3], 5e-4, |x| (-0.5 * q * x[0] * x[0]).exp());
    for tau in [0.1, 0.3] {
        let p = params(&traj, tau);
        assert!((p.c0_lower - q).abs() < 1e-9);
        let m = check_convexity_preservation(&traj, &p, ConvexityMode::Convex, None).unwrap();
        let oracle = q - q / (1.0 + 2.0 * tau * q);
        assert!((m.value - oracle).abs() < 5e-3, "{} vs {oracle}", m.value);
    }
}

#[test]
fn crossed_term_on_a_box_is_a_valid_inequality_and_a_small_residual() {
    let traj = cosine_trajectory(128, 1e-3);
    let g = traj.grid().clone();
    let mut v = traj.map_fields(|f| hopf_cole(f, DELTA)).unwrap();
    v.meta.delta = Some(DELTA);
    let drift = DriftSampler::from_log_trajectory(&v).unwrap();
    let sp = SolverParams::new(1e-3, 0.0, 0.2, vec![0.1, 0.2]).unwrap().every_step(true);
    let p = params(&traj, 0.2);
    for c in bump_centers(&g, 8, 0.5) {
        let run = solve_backward_fp(&cosine_bump(&g, c, 0.1).unwrap(), &drift, &sp).unwrap();
        let (id, ineq) = check_crossed_term(&traj, &run, &p).unwrap();
        assert!(id.value > -5e-3);
        assert!(ineq.value > 0.0);
        let ih = check_integral_hessian(&traj, &run, &p).unwrap();
        assert!(ih.margin.value > 0.0);
        // a probability density can never see less than the pointwise minimum
        let u = traj.at(0.2).unwrap();
        let field = u.map(|x| ((p.a_bound + DELTA) / (x + DELTA)).ln());
        assert!(field.dot(&run.terminal) >= field.min() - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn log_margins_are_invariant_under_scaling(scale in 1e-3f64..1e3, bump in 0.1f64..2.0) {
        let g = Arc::new(Grid::new(BoxDomain::unit(2).unwrap(), &[16, 16]).unwrap());
        let f = move |x: [f64; 2]| 1.0 + bump * (PI * x[0]).cos() * (PI * x[1]).cos() + bump;
        let a = flow(g.clone(), 0.0, 0.1, vec![0.1], 2e-3, f);
        let b = flow(g, 0.0, 0.1, vec![0.1], 2e-3, move |x| scale * f(x));
        let pa = EstimateParams::certify(&a, 0.1, 1e-10, 2.0, Tolerances::fixed(0.0)).unwrap();
        let pb = EstimateParams::certify(&b, 0.1, 1e-10 * scale, 2.0, Tolerances::fixed(0.0)).unwrap();
        let pairs = [
            (check_li_yau(&a, &pa).unwrap().value, check_li_yau(&b, &pb).unwrap().value),
            (check_hamilton(&a, &pa).unwrap().value, check_hamilton(&b, &pb).unwrap().value),
            (check_hsz_gradient(&a, &pa).unwrap().value, check_hsz_gradient(&b, &pb).unwrap().value),
            (check_reversed(&a, &pa).unwrap().0.value, check_reversed(&b, &pb).unwrap().0.value),
        ];
        for (x, y) in pairs {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
}
