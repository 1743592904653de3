use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{ConvexityMode, ESTIMATE_NAMES};
use crate::grid::{BoxDomain, Grid};
use crate::heat::SolverParams;
use crate::potential::PotentialSpec;

use super::initial::InitialDatum;

/// Largest cell count per axis in 1D (1025 nodes).
pub const MAX_CELLS_1D: usize = 1024;
/// Largest cell count per axis in 2D (257² nodes).
pub const MAX_CELLS_2D: usize = 256;
/// Relative Hopf-Cole shift used when none is configured.
pub const DEFAULT_DELTA_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub truncates_full_space: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Defaults to `min(1e-3, (t_end − t0)/16)`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Defaults to the datum's start time, or 0.
    #[serde(default)]
    pub t0: Option<f64>,
    /// Defaults to the last checkpoint.
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Absolute times; elapsed times are `checkpoint − t0`.
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub store_every_step: bool,
}

fn default_exponents() -> Vec<f64> {
    vec![2.0, f64::INFINITY]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSelection {
    #[serde(default)]
    pub select: Vec<String>,
    #[serde(default = "default_exponents")]
    pub lp_exponents: Vec<f64>,
    #[serde(default)]
    pub convexity_modes: Vec<String>,
    /// Absolute tolerances by margin name or estimate name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "yes")]
    pub delta_stability: bool,
}

impl Default for EstimateSelection {
    fn default() -> Self {
        Self {
            select: Vec::new(),
            lp_exponents: default_exponents(),
            convexity_modes: Vec::new(),
            tolerances: BTreeMap::new(),
            delta_stability: true,
        }
    }
}

fn default_bumps() -> usize {
    8
}

fn default_span() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointSpec {
    #[serde(default = "default_bumps")]
    pub bumps: usize,
    /// Bump half-width; defaults to a tenth of the shortest side.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Fraction of each side over which bump centres are spread.
    #[serde(default = "default_span")]
    pub span: f64,
    #[serde(default)]
    pub tail_radii: Vec<f64>,
}

impl Default for AdjointSpec {
    fn default() -> Self {
        Self {
            bumps: default_bumps(),
            radius: None,
            span: default_span(),
            tail_radii: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// When ≥ 3, reruns at successively halved `h` and `dt` and reports the
    /// observed order of every margin.
    #[serde(default)]
    pub convergence_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub initial: InitialDatum,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub estimates: EstimateSelection,
    #[serde(default)]
    pub adjoint: AdjointSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

/// Reads and validates a scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let cfg = parse_config_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
        path: "<inline>".into(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn dim(&self) -> usize {
        self.domain.lower.len()
    }

    pub fn t0(&self) -> f64 {
        self.solver
            .t0
            .or_else(|| self.initial.start_time())
            .unwrap_or(0.0)
    }

    pub fn t_end(&self) -> f64 {
        self.solver
            .t_end
            .or_else(|| self.solver.checkpoints.last().copied())
            .unwrap_or(self.t0())
    }

    pub fn dt(&self) -> f64 {
        self.solver
            .dt
            .unwrap_or_else(|| (1e-3f64).min((self.t_end() - self.t0()) / 16.0))
    }

    pub fn selects(&self, name: &str) -> bool {
        self.estimates.select.iter().any(|s| s == name)
    }

    pub fn convexity_modes(&self) -> Result<Vec<ConvexityMode>> {
        self.estimates
            .convexity_modes
            .iter()
            .map(|m| m.parse())
            .collect()
    }

    /// Whether the trajectory must keep every step (space-time integrals or
    /// trajectory-wide constants are needed).
    pub fn needs_every_step(&self) -> bool {
        self.solver.store_every_step
            || self.selects("crossed_term")
            || self.selects("integral_hessian")
            || (self.selects("convexity")
                && self
                    .estimates
                    .convexity_modes
                    .iter()
                    .any(|m| m.starts_with("potential")))
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        let domain = BoxDomain::new(
            self.domain.lower.clone(),
            self.domain.upper.clone(),
            self.domain.truncates_full_space,
        )?;
        Ok(Arc::new(Grid::new(domain, &self.grid.cells)?))
    }

    pub fn solver_params(&self) -> Result<SolverParams> {
        Ok(SolverParams::new(
            self.dt(),
            self.t0(),
            self.t_end(),
            self.solver.checkpoints.clone(),
        )?
        .every_step(self.needs_every_step()))
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let v = |field: &str, m: String| Err(Error::validation(field, m));
        if self.id.trim().is_empty() {
            return v("id", "scenario id must not be empty".into());
        }
        let dim = self.dim();
        if !(1..=2).contains(&dim) || self.domain.upper.len() != dim {
            return v(
                "domain",
                format!(
                    "lower/upper must both have 1 or 2 entries, got {} and {}",
                    dim,
                    self.domain.upper.len()
                ),
            );
        }
        if self.grid.cells.len() != dim {
            return v(
                "grid.cells",
                format!("expected {dim} cell counts, got {}", self.grid.cells.len()),
            );
        }
        let cap = if dim == 1 { MAX_CELLS_1D } else { MAX_CELLS_2D };
        if let Some(c) = self.grid.cells.iter().find(|&&c| c > cap) {
            return v(
                "grid.cells",
                format!("{c} cells exceeds the resolution cap of {cap} per axis in {dim}D"),
            );
        }
        self.initial.validate(dim)?;
        if let (Some(s), Some(d)) = (self.solver.t0, self.initial.start_time()) {
            if (s - d).abs() > 1e-12 * d.abs().max(1.0) {
                return v(
                    "solver.t0",
                    format!("solver.t0 = {s} conflicts with the datum start time {d}"),
                );
            }
        }
        if self.solver.checkpoints.is_empty() {
            return v("solver.checkpoints", "at least one checkpoint is required".into());
        }
        let t0 = self.t0();
        for &c in &self.solver.checkpoints {
            if !(c > t0) {
                return v(
                    "solver.checkpoints",
                    format!(
                        "checkpoint {c} is not after t0 = {t0}; estimates are undefined at elapsed time 0"
                    ),
                );
            }
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return v("delta", format!("delta must be finite and nonnegative, got {d}"));
            }
        }
        for name in &self.estimates.select {
            if !ESTIMATE_NAMES.contains(&name.as_str()) {
                return v(
                    "estimates.select",
                    format!(
                        "unknown estimate `{name}`; valid names: {}",
                        ESTIMATE_NAMES.join(", ")
                    ),
                );
            }
        }
        let modes = self.convexity_modes()?;
        if self.selects("convexity") && modes.is_empty() {
            return v(
                "estimates.convexity_modes",
                "convexity is selected but no mode is given".into(),
            );
        }
        if (self.selects("lp_smoothing") || self.selects("integral_hessian"))
            && self.estimates.lp_exponents.iter().any(|p| !(*p >= 2.0))
        {
            return v(
                "estimates.lp_exponents",
                "exponents must lie in [2, inf]".into(),
            );
        }
        for (k, t) in &self.estimates.tolerances {
            if !(*t >= 0.0) {
                return v(
                    "estimates.tolerances",
                    format!("tolerance for `{k}` must be nonnegative, got {t}"),
                );
            }
        }
        if let Some(r) = self.adjoint.radius {
            if !(r > 0.0) {
                return v("adjoint.radius", format!("must be positive, got {r}"));
            }
        }
        if !(self.adjoint.span > 0.0 && self.adjoint.span <= 1.0) {
            return v(
                "adjoint.span",
                format!("must lie in (0, 1], got {}", self.adjoint.span),
            );
        }
        if self.diagnostics.convergence_levels == 1 || self.diagnostics.convergence_levels == 2 {
            return v(
                "diagnostics.convergence_levels",
                "an observed order needs at least 3 levels".into(),
            );
        }
        self.build_grid()?;
        self.solver_params()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
id = "t"
seed = 7
domain = { lower = [0.0], upper = [1.0] }
grid = { cells = [32] }
initial = { preset = "random_log_concave" }
solver = { checkpoints = [0.05, 0.2] }
estimates = { select = ["crossed_term"] }
"#;

    #[test]
    fn hash_is_stable_and_input_sensitive() {
        let a = parse_config_str(BASE).unwrap();
        assert_eq!(a.hash(), parse_config_str(BASE).unwrap().hash());
        let b = parse_config_str(&BASE.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn integral_checks_store_every_step() {
        let cfg = parse_config_str(BASE).unwrap();
        assert!(cfg.needs_every_step());
        assert!(cfg.solver_params().unwrap().store_every_step);
        let pointwise = parse_config_str(&BASE.replace("crossed_term", "li_yau")).unwrap();
        assert!(!pointwise.needs_every_step());
    }

    #[test]
    fn gaussian_start_time_is_the_solver_start() {
        let text = BASE.replace(
            "preset = \"random_log_concave\"",
            "preset = \"gaussian\", t0 = 0.01",
        );
        let cfg = parse_config_str(&text).unwrap();
        assert_eq!(cfg.t0(), 0.01);
        let clash = text.replace("solver = {", "solver = { t0 = 0.0,");
        assert!(parse_config_str(&clash).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace("seed = 7", "seed = 7\ncolour = 1");
        assert!(matches!(parse_config_str(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn two_convergence_levels_are_rejected() {
        let text = format!("{BASE}diagnostics = {{ convergence_levels = 2 }}\n");
        assert!(parse_config_str(&text).is_err());
    }
}
