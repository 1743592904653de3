use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::Margin;

/// CSV header of the margin table, in this exact order.
pub const CSV_COLUMNS: [&str; 9] = [
    "scenario_id",
    "check_name",
    "tau",
    "margin",
    "tolerance",
    "passed",
    "worst_node",
    "worst_value",
    "runtime_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    #[serde(flatten)]
    pub margin: Margin,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaStability {
    pub name: String,
    pub tau: f64,
    pub margin: f64,
    pub margin_tenth_delta: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostic {
    pub tau: f64,
    pub radius: f64,
    /// `H_R` at the earliest stored time of the first bump run.
    pub at_start: f64,
    /// `H_R` at the terminal time of the first bump run.
    pub at_terminal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOrder {
    pub name: String,
    pub tau: f64,
    /// Margin at each level, coarsest first.
    pub values: Vec<f64>,
    /// `log2(|m₀ − m₁| / |m₁ − m₂|)` from the three coarsest levels.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub delta: f64,
    pub a_bound: f64,
    pub min_u: f64,
    /// Relative change of `∫u`; absent when a potential is present.
    pub heat_mass_drift: Option<f64>,
    pub adjoint_runs: usize,
    pub adjoint_mass_drift: Option<f64>,
    pub adjoint_min: Option<f64>,
    pub drift_bound: Option<f64>,
    pub delta_stability: Vec<DeltaStability>,
    pub tails: Vec<TailDiagnostic>,
    pub convergence: Vec<ConvergenceOrder>,
}

/// One row of the per-node plot dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub scenario_id: String,
    pub time: f64,
    pub tau: f64,
    pub node: usize,
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<f64>,
    pub u: f64,
    pub log_u: f64,
    pub grad_sq: f64,
    pub lap_log_u: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub scenario_id: String,
    pub config_hash: String,
    pub calibration_version: String,
    pub checks: Vec<CheckRecord>,
    pub diagnostics: Diagnostics,
    pub runtime_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plot: Vec<PlotRow>,
}

impl EstimateReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.margin.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.margin.passed)
    }

    pub fn margin(&self, name: &str, tau: f64) -> Option<&Margin> {
        self.checks
            .iter()
            .map(|c| &c.margin)
            .find(|m| m.name == name && (m.tau - tau).abs() <= 1e-9 * tau.abs().max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn write_csv<W: Write>(reports: &[EstimateReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        for c in &r.checks {
            let m = &c.margin;
            w.write_record([
                r.scenario_id.clone(),
                m.name.clone(),
                m.tau.to_string(),
                m.value.to_string(),
                m.tolerance.to_string(),
                m.passed.to_string(),
                m.node.map(|n| n.to_string()).unwrap_or_default(),
                m.worst_value.to_string(),
                format!("{:.3}", c.runtime_ms),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(reports: &[EstimateReport], mut out: W) -> Result<()> {
    if let [single] = reports {
        serde_json::to_writer_pretty(&mut out, single)?;
    } else {
        serde_json::to_writer_pretty(&mut out, reports)?;
    }
    writeln!(out)?;
    Ok(())
}

/// Per-node field dump; `y` is written only for 2D scenarios.
pub fn write_plot_csv<W: Write>(reports: &[EstimateReport], out: W) -> Result<()> {
    let two_d = reports.iter().any(|r| r.plot.iter().any(|p| p.y.is_some()));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["scenario_id", "time", "tau", "node", "x"];
    if two_d {
        header.push("y");
    }
    header.extend(["u", "log_u", "grad_sq", "lap_log_u", "lambda_min", "lambda_max"]);
    w.write_record(&header)?;
    for r in reports {
        for p in &r.plot {
            let mut row = vec![
                p.scenario_id.clone(),
                p.time.to_string(),
                p.tau.to_string(),
                p.node.to_string(),
                p.x.to_string(),
            ];
            if two_d {
                row.push(p.y.map(|y| y.to_string()).unwrap_or_default());
            }
            for v in [p.u, p.log_u, p.grad_sq, p.lap_log_u, p.lambda_min, p.lambda_max] {
                row.push(v.to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one report to `path` in the given format.
pub fn emit_report(report: &EstimateReport, format: ReportFormat, path: &Path) -> Result<()> {
    emit_reports(std::slice::from_ref(report), format, path)
}

pub fn emit_reports(reports: &[EstimateReport], format: ReportFormat, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Csv => write_csv(reports, file),
        ReportFormat::Json => write_json(reports, file),
    }
}

/// Reads reports written by [`write_json`] (one object or an array).
pub fn read_json_reports(path: &Path) -> Result<Vec<EstimateReport>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: &str, node: Option<usize>) -> EstimateReport {
        EstimateReport {
            scenario_id: id.into(),
            config_hash: "0".repeat(64),
            calibration_version: "v".into(),
            checks: vec![CheckRecord {
                margin: Margin::new("crossed_identity", 0.5, 0.5, -0.25, node, 1.0, 0.125),
                runtime_ms: 1.23456,
            }],
            diagnostics: Diagnostics::default(),
            runtime_ms: 2.0,
            plot: Vec::new(),
        }
    }

    #[test]
    fn csv_row_layout() {
        let mut buf = Vec::new();
        write_csv(&[report("a", None), report("b", Some(3))], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[1], "a,crossed_identity,0.5,-0.25,0.125,false,,1,1.235");
        assert_eq!(lines[2], "b,crossed_identity,0.5,-0.25,0.125,false,3,1,1.235");
    }

    #[test]
    fn json_is_an_object_for_one_report_and_an_array_otherwise() {
        let mut one = Vec::new();
        write_json(&[report("a", None)], &mut one).unwrap();
        assert!(one.starts_with(b"{"));
        let mut two = Vec::new();
        write_json(&[report("a", None), report("b", None)], &mut two).unwrap();
        assert!(two.starts_with(b"["));
    }

    #[test]
    fn lookup_by_name_and_tau() {
        let r = report("a", None);
        assert!(r.margin("crossed_identity", 0.5).is_some());
        assert!(r.margin("crossed_identity", 0.25).is_none());
        assert!(!r.all_passed());
        assert_eq!(r.failures().count(), 1);
    }
}
