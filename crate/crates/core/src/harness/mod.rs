//! Scenario runs, weight sweeps and oracle checks, with their CSV artifacts.

mod artifacts;
mod run;
mod sweep;
mod verify;

use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::sim::SimError;

pub use artifacts::{
    read_summary, summary_row, timeseries_header, write_mpc_diag, write_summary,
    write_violations, CsvSampleSink, SweepResultRow,
};
pub use run::{run_to_dir, RunArtifacts, MPC_DIAG_FILE, SUMMARY_FILE, TIMESERIES_FILE, VIOLATIONS_FILE};
pub use sweep::{canonical_cells, check_trends, grid_cells, sweep, sweep_to_dir, TrendCheck};
pub use verify::{verify, write_verify, VerifyOptions, VerifyReport, VERIFY_FILE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
