use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sps_core::config::ScenarioConfig;
use sps_core::harness::{
    canonical_cells, check_trends, grid_cells, run_to_dir, sweep_to_dir, verify, write_verify,
    HarnessError, VerifyOptions,
};

#[derive(Parser)]
#[command(name = "sps", version, about = "Shipboard power-system energy-management simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its CSV artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        /// Keep every n-th plant step in timeseries.csv.
        #[arg(long, default_value_t = 1)]
        log_every: usize,
    },
    /// Re-run the scenario over a grid of cost weights.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Generator weights. Without --beta and --gamma the standard
        /// one-at-a-time sweeps over 0..=10 are run.
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        /// Battery weights.
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        /// Exit with status 1 unless every weight trend holds.
        #[arg(long)]
        check_trends: bool,
    },
    /// Compare distributed and centralized solves on the first MPC problem.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        perturbations: usize,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = ScenarioConfig::from_path(&self.config)?;
        if let Some(d) = self.duration {
            cfg.duration_s = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path, HarnessError> {
        self.out
            .as_deref()
            .ok_or_else(|| HarnessError::Invalid("--out <dir> is required".into()))
    }
}

enum Failure {
    /// Checks ran and did not pass.
    Check,
    Error(HarnessError),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self::Error(e)
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, log_every } => {
            let cfg = common.load()?;
            let out = common.out_dir()?;
            let run = run_to_dir(&cfg, out, log_every)?;
            let s = &run.summary;
            println!(
                "run: {} MPC steps, generator {:.3} MWh, battery {:.3} MWh, capacity loss {:.6} %, {} shortfall steps, {} violations",
                s.mpc_steps,
                s.generator_energy_wh / 1e6,
                s.battery_energy_wh / 1e6,
                s.capacity_loss_pct,
                s.shortfall_events,
                s.violations
            );
            println!("artifacts in {}", out.display());
            Ok(())
        }
        Command::Sweep {
            common,
            beta,
            gamma,
            check_trends: strict,
        } => {
            let cfg = common.load()?;
            let out = common.out_dir()?;
            let first = |v: Option<f64>| v.unwrap_or(1.0);
            let cells = match (beta.is_empty(), gamma.is_empty()) {
                (true, true) => canonical_cells(),
                (false, true) => {
                    grid_cells(&beta, &[first(cfg.pcms.first().map(|b| b.spec.weight_gamma))])
                }
                (true, false) => {
                    grid_cells(&[first(cfg.pgms.first().map(|g| g.spec.weight_beta))], &gamma)
                }
                (false, false) => grid_cells(&beta, &gamma),
            };
            let rows = sweep_to_dir(&cfg, &cells, out)?;
            for r in &rows {
                let w = |x: Option<f64>| x.map_or("-".into(), |x| x.to_string());
                if r.error.is_empty() {
                    println!(
                        "beta {} gamma {}: battery {:.3} MWh, generator {:.3} MWh, loss {:.6} %",
                        w(r.beta),
                        w(r.gamma),
                        r.battery_energy_wh / 1e6,
                        r.generator_energy_wh / 1e6,
                        r.capacity_loss_pct
                    );
                } else {
                    println!("beta {} gamma {}: failed: {}", w(r.beta), w(r.gamma), r.error);
                }
            }
            let checks = check_trends(&rows);
            for c in &checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {} {}", c.name, c.detail);
            }
            if strict && checks.iter().any(|c| !c.passed) {
                return Err(Failure::Check);
            }
            Ok(())
        }
        Command::Verify {
            common,
            perturbations,
            threshold,
        } => {
            let cfg = common.load()?;
            let rep = verify(
                &cfg,
                &VerifyOptions {
                    perturbations,
                    threshold,
                },
            )?;
            if let Some(out) = &common.out {
                write_verify(out, &rep)?;
            }
            println!(
                "verify: {} cases ({} balanced, {} infeasible in both), {} status mismatches",
                rep.cases, rep.feasible_cases, rep.infeasible_cases, rep.status_mismatches
            );
            println!(
                "max power deviation {:.3e} W ({:.3e} relative), max objective gap {:.3e} relative, threshold {:.1e}",
                rep.max_power_dev_w, rep.max_power_dev_rel, rep.max_objective_gap_rel, rep.threshold
            );
            if rep.passed() {
                println!("PASS");
                Ok(())
            } else {
                println!("FAIL");
                Err(Failure::Check)
            }
        }
    }
}
