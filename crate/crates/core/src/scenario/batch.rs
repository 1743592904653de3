use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::parse_config;
use super::report::EstimateReport;
use super::run::{run_scenario_with, RunOptions};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_MARGIN_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Outcome of one scenario file, in input order.
#[derive(Debug)]
pub struct BatchItem {
    pub path: PathBuf,
    pub outcome: Result<EstimateReport>,
}

#[derive(Debug)]
pub struct BatchOutcome {
    pub items: Vec<BatchItem>,
}

impl BatchOutcome {
    /// 2 if any scenario errored, else 1 if any margin failed, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.items.iter().any(|i| i.outcome.is_err()) {
            EXIT_ERROR
        } else if self
            .items
            .iter()
            .any(|i| matches!(&i.outcome, Ok(r) if !r.all_passed()))
        {
            EXIT_MARGIN_FAILED
        } else {
            EXIT_OK
        }
    }

    pub fn reports(&self) -> Vec<EstimateReport> {
        self.items
            .iter()
            .filter_map(|i| i.outcome.as_ref().ok().cloned())
            .collect()
    }

    pub fn errors(&self) -> impl Iterator<Item = (&PathBuf, &Error)> {
        self.items
            .iter()
            .filter_map(|i| i.outcome.as_ref().err().map(|e| (&i.path, e)))
    }
}

/// Runs every scenario on a pool of `jobs` threads. A failing scenario does
/// not stop the others; results come back in input order.
pub fn run_batch(paths: &[PathBuf], jobs: usize, opts: &RunOptions) -> Result<BatchOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    let items = pool.install(|| {
        paths
            .par_iter()
            .map(|p| BatchItem {
                path: p.clone(),
                outcome: parse_config(p).and_then(|cfg| run_scenario_with(&cfg, opts)),
            })
            .collect()
    });
    Ok(BatchOutcome { items })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_files_do_not_stop_the_batch() {
        let out = run_batch(
            &["/nonexistent/a.toml".into(), "/nonexistent/b.toml".into()],
            2,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.items.len(), 2);
        assert_eq!(out.errors().count(), 2);
        assert_eq!(out.exit_code(), EXIT_ERROR);
        assert_eq!(out.items[1].path, PathBuf::from("/nonexistent/b.toml"));
    }

    #[test]
    fn empty_batch_succeeds() {
        let out = run_batch(&[], 1, &RunOptions::default()).unwrap();
        assert_eq!(out.exit_code(), EXIT_OK);
    }
}
