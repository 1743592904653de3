use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frozen per-check constants `C_est`, with `tolerance = C_est (h + dt + δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTable {
    pub version: String,
    /// Factor already folded into the constants.
    pub safety: f64,
    /// Used for checks without an entry.
    pub default_constant: f64,
    pub constants: BTreeMap<String, f64>,
}

const SHIPPED: &str = include_str!("../../data/calibration.toml");

impl CalibrationTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: "calibration.toml".into(),
            message: e.to_string(),
        })
    }

    /// The table generated by `calibrate` and shipped with the crate.
    pub fn shipped() -> Self {
        Self::from_toml(SHIPPED).expect("shipped calibration table parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration table serializes")
    }

    pub fn constant(&self, name: &str, family: &str) -> f64 {
        self.constants
            .get(name)
            .or_else(|| self.constants.get(family))
            .copied()
            .unwrap_or(self.default_constant)
    }
}

/// Resolved tolerances for one scenario: calibrated constants times the
/// discretization scale, unless an absolute override is configured.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// `h_max + dt + δ`
    pub scale: f64,
    pub table: CalibrationTable,
    /// Absolute tolerances keyed by margin name or estimate family.
    pub overrides: BTreeMap<String, f64>,
}

impl Tolerances {
    pub fn new(table: CalibrationTable, h: f64, dt: f64, delta: f64) -> Self {
        Self {
            scale: h + dt + delta,
            table,
            overrides: BTreeMap::new(),
        }
    }

    /// Same absolute tolerance for every check.
    pub fn fixed(tol: f64) -> Self {
        Self {
            scale: 1.0,
            table: CalibrationTable {
                version: "fixed".into(),
                safety: 1.0,
                default_constant: tol,
                constants: BTreeMap::new(),
            },
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, name: impl Into<String>, tol: f64) -> Self {
        self.overrides.insert(name.into(), tol);
        self
    }

    pub fn for_check(&self, name: &str, family: &str) -> f64 {
        if let Some(t) = self.overrides.get(name).or_else(|| self.overrides.get(family)) {
            return *t;
        }
        self.table.constant(name, family) * self.scale
    }
}
