use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::artifacts::{summary_row, write_mpc_diag, write_summary, write_violations};
use super::{CsvSampleSink, HarnessError, SweepResultRow};
use crate::config::ScenarioConfig;
use crate::sim::{run_scenario_with, SimOutcome};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const MPC_DIAG_FILE: &str = "mpc_diag.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const VIOLATIONS_FILE: &str = "violations.csv";

#[derive(Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub summary: SweepResultRow,
    pub outcome: SimOutcome,
}

/// Runs `cfg` and writes the time series, MPC diagnostics, violations and
/// a one-line summary into `out`.
pub fn run_to_dir(
    cfg: &ScenarioConfig,
    out: &Path,
    log_every: usize,
) -> Result<RunArtifacts, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let ts_path = out.join(TIMESERIES_FILE);
    let file = File::create(&ts_path).map_err(|e| HarnessError::io(&ts_path, e))?;
    let mut sink = CsvSampleSink::new(BufWriter::new(file), cfg.pgms.len(), cfg.pcms.len())?;
    let outcome = run_scenario_with(cfg, log_every, &mut sink)?;
    sink.finish()?;

    write_mpc_diag(&out.join(MPC_DIAG_FILE), &outcome.mpc)?;
    write_violations(&out.join(VIOLATIONS_FILE), &outcome.summary.violations)?;
    let summary = summary_row(cfg, &outcome.summary);
    write_summary(&out.join(SUMMARY_FILE), std::slice::from_ref(&summary))?;
    Ok(RunArtifacts {
        dir: out.to_path_buf(),
        summary,
        outcome,
    })
}
