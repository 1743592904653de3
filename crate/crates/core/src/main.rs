use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use harnack_lab::estimator::CalibrationTable;
use harnack_lab::scenario::{
    calibrate, read_json_reports, run_batch, write_csv, write_json, write_plot_csv,
    EstimateReport, RunOptions, CALIBRATION_SAFETY, EXIT_ERROR, EXIT_MARGIN_FAILED, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "harnack-lab", version, about = "Certify Harnack-type estimates on discrete heat flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files sequentially.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-node fields at each checkpoint as CSV.
        #[arg(long)]
        plot_data: Option<PathBuf>,
        /// Calibration table to use instead of the shipped one.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Run scenario files on a thread pool.
    Batch {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, env = "HARNACK_LAB_JOBS", default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot_data: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Rerun the refinement studies and write a calibration table.
    Calibrate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = CALIBRATION_SAFETY)]
        safety: f64,
    },
    /// Convert saved JSON reports.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(
    reports: &[EstimateReport],
    format: Format,
    out: Option<&Path>,
    plot: Option<&Path>,
) -> harnack_lab::Result<()> {
    let mut w = sink(out)?;
    match format {
        Format::Csv => write_csv(reports, &mut w)?,
        Format::Json => write_json(reports, &mut w)?,
    }
    w.flush()?;
    if let Some(p) = plot {
        write_plot_csv(reports, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn load_table(path: Option<&Path>) -> harnack_lab::Result<CalibrationTable> {
    match path {
        Some(p) => CalibrationTable::from_toml(&std::fs::read_to_string(p)?),
        None => Ok(CalibrationTable::shipped()),
    }
}

fn scenarios(
    configs: &[PathBuf],
    jobs: usize,
    format: Format,
    out: Option<&Path>,
    plot: Option<&Path>,
    calibration: Option<&Path>,
) -> harnack_lab::Result<i32> {
    let opts = RunOptions {
        table: load_table(calibration)?,
        plot_data: plot.is_some(),
    };
    let outcome = run_batch(configs, jobs, &opts)?;
    for (path, err) in outcome.errors() {
        eprintln!("error: {}: {err}", path.display());
        let mut source = std::error::Error::source(err);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
    }
    let reports = outcome.reports();
    for r in &reports {
        for f in r.failures() {
            eprintln!(
                "fail: {} {} tau={} margin={:e} tolerance={:e}",
                r.scenario_id, f.margin.name, f.margin.tau, f.margin.value, f.margin.tolerance
            );
        }
    }
    emit(&reports, format, out, plot)?;
    Ok(outcome.exit_code())
}

fn dispatch(cli: Cli) -> harnack_lab::Result<i32> {
    match cli.command {
        Command::Run {
            configs,
            format,
            out,
            plot_data,
            calibration,
        } => scenarios(
            &configs,
            1,
            format,
            out.as_deref(),
            plot_data.as_deref(),
            calibration.as_deref(),
        ),
        Command::Batch {
            configs,
            jobs,
            format,
            out,
            plot_data,
            calibration,
        } => scenarios(
            &configs,
            jobs,
            format,
            out.as_deref(),
            plot_data.as_deref(),
            calibration.as_deref(),
        ),
        Command::Calibrate { out, safety } => {
            let table = calibrate(safety)?;
            let mut w = sink(out.as_deref())?;
            w.write_all(table.to_toml().as_bytes())?;
            w.flush()?;
            Ok(EXIT_OK)
        }
        Command::Report {
            reports,
            format,
            out,
            plot_data,
        } => {
            let mut all = Vec::new();
            for p in &reports {
                all.extend(read_json_reports(p)?);
            }
            emit(&all, format, out.as_deref(), plot_data.as_deref())?;
            Ok(if all.iter().all(|r| r.all_passed()) {
                EXIT_OK
            } else {
                EXIT_MARGIN_FAILED
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
