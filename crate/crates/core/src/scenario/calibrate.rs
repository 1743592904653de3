use std::collections::BTreeMap;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::estimator::CalibrationTable;

use super::config::{parse_config_str, ScenarioConfig};
use super::report::EstimateReport;
use super::run::{run_scenario_with, RunOptions};

pub const CALIBRATION_SAFETY: f64 = 4.0;
/// Smallest constant handed out, so that no check gets a zero tolerance.
const FLOOR: f64 = 0.1;

const STUDIES: [&str; 6] = [
    r#"
id = "cal_gaussian_1d"
domain = { lower = [-8.0], upper = [8.0], truncates_full_space = true }
grid = { cells = [256] }
initial = { preset = "gaussian", t0 = 0.1 }
solver = { dt = 2e-3, checkpoints = [0.15, 0.35] }
adjoint = { bumps = 8, radius = 1.0, span = 0.5 }
[estimates]
select = ["li_yau", "hamilton", "hsz_gradient", "oscillation_gradient", "lp_smoothing",
          "reversed", "crossed_term", "integral_hessian", "convexity"]
convexity_modes = ["convex", "concave", "two_sided"]
delta_stability = false
"#,
    r#"
id = "cal_cosine_1d"
domain = { lower = [0.0], upper = [1.0] }
grid = { cells = [64] }
initial = { preset = "neumann_cosine", a = 2.0, b = 1.0, k = 1.0 }
solver = { dt = 2e-3, checkpoints = [0.05, 0.1, 0.2] }
adjoint = { bumps = 8, radius = 0.1, span = 0.5 }
[estimates]
select = ["li_yau", "hamilton", "hsz_gradient", "oscillation_gradient", "lp_smoothing",
          "reversed", "crossed_term", "integral_hessian"]
delta_stability = false
"#,
    r#"
id = "cal_cosine_2d"
domain = { lower = [0.0, 0.0], upper = [1.0, 1.0] }
grid = { cells = [16, 16] }
initial = { preset = "neumann_cosine", a = 2.0, b = 1.0, k = 1.0 }
solver = { dt = 2e-3, checkpoints = [0.05, 0.1, 0.2] }
[estimates]
select = ["li_yau", "hamilton", "hsz_gradient", "oscillation_gradient", "lp_smoothing",
          "reversed"]
delta_stability = false
"#,
    r#"
id = "cal_gaussian_2d"
domain = { lower = [-4.0, -4.0], upper = [4.0, 4.0], truncates_full_space = true }
grid = { cells = [48, 48] }
initial = { preset = "gaussian", t0 = 0.25 }
solver = { dt = 4e-3, checkpoints = [0.3, 0.5] }
[estimates]
select = ["li_yau", "hamilton", "hsz_gradient", "oscillation_gradient", "lp_smoothing",
          "reversed", "convexity"]
convexity_modes = ["convex"]
delta_stability = false
"#,
    r#"
id = "cal_log_quadratic"
domain = { lower = [-8.0], upper = [8.0], truncates_full_space = true }
grid = { cells = [256] }
initial = { preset = "log_quadratic", q = [[2.0]] }
solver = { dt = 2e-3, checkpoints = [0.1, 0.3] }
[estimates]
select = ["convexity"]
convexity_modes = ["convex", "concave", "two_sided"]
delta_stability = false
"#,
    r#"
id = "cal_potential"
domain = { lower = [-8.0], upper = [8.0], truncates_full_space = true }
grid = { cells = [256] }
initial = { preset = "log_quadratic", q = [[1.0]] }
solver = { dt = 2e-3, checkpoints = [0.1, 0.3] }
adjoint = { bumps = 8, radius = 1.0, span = 0.5 }
[potential]
kind = "separable"
space = { kind = "quadratic", center = [0.0] }
time = { kind = "constant", value = 0.5 }
[estimates]
select = ["convexity"]
convexity_modes = ["potential_a", "potential_b", "potential_c"]
delta_stability = false
"#,
];

/// The refinement studies behind the shipped table, at their coarse level.
pub fn calibration_studies() -> Vec<ScenarioConfig> {
    STUDIES
        .iter()
        .map(|s| parse_config_str(s).expect("calibration study parses"))
        .collect()
}

fn refined(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut fine = cfg.clone();
    fine.grid.cells = cfg.grid.cells.iter().map(|c| c * 2).collect();
    fine.solver.dt = Some(cfg.dt() / 2.0);
    fine
}

/// Runs each study at `(h, dt)` and `(h/2, dt/2)` and sets
/// `C = safety · max 2|m_h − m_{h/2}| / (h + dt + δ)` per margin name, and
/// per estimate family as the max over its members.
pub fn calibrate(safety: f64) -> Result<CalibrationTable> {
    let blank = CalibrationTable {
        version: "calibrating".into(),
        safety: 1.0,
        default_constant: 1.0,
        constants: BTreeMap::new(),
    };
    let opts = RunOptions {
        table: blank,
        plot_data: false,
    };
    let pairs: Vec<(ScenarioConfig, EstimateReport, EstimateReport)> = calibration_studies()
        .into_par_iter()
        .map(|cfg| {
            let mut coarse_cfg = cfg.clone();
            let coarse = run_scenario_with(&coarse_cfg, &opts)?;
            coarse_cfg.delta = Some(coarse.diagnostics.delta);
            let fine = run_scenario_with(&refined(&coarse_cfg), &opts)?;
            Ok((coarse_cfg, coarse, fine))
        })
        .collect::<Result<_>>()?;

    let mut constants: BTreeMap<String, f64> = BTreeMap::new();
    for (cfg, coarse, fine) in &pairs {
        let grid = cfg.build_grid()?;
        let scale = grid.h_max() + cfg.dt() + coarse.diagnostics.delta;
        for c in &coarse.checks {
            let m = &c.margin;
            let Some(f) = fine.margin(&m.name, m.tau) else {
                continue;
            };
            let raw = 2.0 * (m.value - f.value).abs() / scale;
            let entry = constants.entry(m.name.clone()).or_insert(0.0);
            *entry = entry.max(raw);
        }
    }
    for v in constants.values_mut() {
        *v = round_up((safety * *v).max(FLOOR));
    }
    let mut families: BTreeMap<String, f64> = BTreeMap::new();
    for (name, &c) in &constants {
        if let Some(family) = family_of(name) {
            let e = families.entry(family.to_string()).or_insert(0.0);
            *e = e.max(c);
        }
    }
    for (family, c) in families {
        constants.entry(family).or_insert(c);
    }
    let default_constant = constants.values().copied().fold(FLOOR, f64::max);
    let digest = Sha256::digest(format!("{safety}{constants:?}").as_bytes());
    Ok(CalibrationTable {
        version: format!("cal-{}", &hex::encode(digest)[..12]),
        safety,
        default_constant,
        constants,
    })
}

/// Two significant digits, rounded away from zero.
fn round_up(x: f64) -> f64 {
    let scale = 10f64.powf(x.log10().floor() - 1.0);
    let r: f64 = format!("{:.1e}", (x / scale).ceil() * scale).parse().unwrap();
    if r < x {
        format!("{:.1e}", r + scale).parse().unwrap()
    } else {
        r
    }
}

fn family_of(name: &str) -> Option<&'static str> {
    let families = [
        ("li_yau", "li_yau"),
        ("hamilton", "hamilton"),
        ("hsz_gradient", "hsz_gradient"),
        ("oscillation_gradient", "oscillation_gradient"),
        ("bernstein", "oscillation_gradient"),
        ("lp_smoothing", "lp_smoothing"),
        ("reversed", "reversed"),
        ("crossed", "crossed_term"),
        ("hsz2", "integral_hessian"),
        ("second_b", "integral_hessian"),
        ("convexity", "convexity"),
        ("k0k", "convexity"),
    ];
    families
        .iter()
        .find(|(prefix, _)| name.starts_with(prefix))
        .map(|(_, f)| *f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn studies_parse() {
        assert_eq!(calibration_studies().len(), STUDIES.len());
    }

    #[test]
    fn rounding_is_upward() {
        assert_eq!(round_up(1.234), 1.3);
        assert_eq!(round_up(0.0451), 0.046);
        assert_eq!(round_up(1.2000000000000002), 1.3);
        assert!(round_up(17.0) >= 17.0);
    }

    #[test]
    fn families() {
        assert_eq!(family_of("bernstein"), Some("oscillation_gradient"));
        assert_eq!(family_of("lp_smoothing_pinf"), Some("lp_smoothing"));
        assert_eq!(family_of("second_b_p2"), Some("integral_hessian"));
        assert_eq!(family_of("nonsense"), None);
    }
}
