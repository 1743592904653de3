//! Scenario files, the estimate pipeline, batch execution and reports.

mod batch;
mod calibrate;
mod config;
mod initial;
mod report;
mod run;

pub use batch::{run_batch, BatchItem, BatchOutcome, EXIT_ERROR, EXIT_MARGIN_FAILED, EXIT_OK};
pub use calibrate::{calibrate, calibration_studies, CALIBRATION_SAFETY};
pub use config::{
    parse_config, parse_config_str, AdjointSpec, DiagnosticsSpec, DomainSpec, EstimateSelection,
    GridSpec, ScenarioConfig, SolverSpec, DEFAULT_DELTA_FACTOR, MAX_CELLS_1D, MAX_CELLS_2D,
};
pub use initial::{InitialDatum, MixtureComponent};
pub use report::{
    emit_report, emit_reports, read_json_reports, write_csv, write_json, write_plot_csv,
    CheckRecord, ConvergenceOrder, DeltaStability, Diagnostics, EstimateReport, PlotRow,
    ReportFormat, TailDiagnostic, CSV_COLUMNS,
};
pub use run::{run_scenario, run_scenario_with, RunOptions};
