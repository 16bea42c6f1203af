use std::path::Path;

use rayon::prelude::*;

use super::artifacts::{summary_row, write_summary};
use super::{HarnessError, SweepResultRow, SUMMARY_FILE};
use crate::config::ScenarioConfig;
use crate::sim::{run_scenario_with, NullSink};

/// Every `(β, γ)` pair of the two lists, β outermost.
pub fn grid_cells(betas: &[f64], gammas: &[f64]) -> Vec<(f64, f64)> {
    betas
        .iter()
        .flat_map(|b| gammas.iter().map(move |g| (*b, *g)))
        .collect()
}

/// γ from 0 to 10 at β = 1 followed by β from 0 to 10 at γ = 1.
pub fn canonical_cells() -> Vec<(f64, f64)> {
    let steps: Vec<f64> = (0..=10).map(f64::from).collect();
    let mut cells = grid_cells(&[1.0], &steps);
    cells.extend(grid_cells(&steps, &[1.0]).into_iter().filter(|c| c.0 != 1.0));
    cells
}

fn with_weights(base: &ScenarioConfig, beta: f64, gamma: f64) -> ScenarioConfig {
    let mut cfg = base.clone();
    for g in &mut cfg.pgms {
        g.spec.weight_beta = beta;
    }
    for b in &mut cfg.pcms {
        b.spec.weight_gamma = gamma;
    }
    cfg
}

/// Runs one scenario per cell in parallel. A failing cell yields a row with
/// `error` set and the others carry on.
pub fn sweep(base: &ScenarioConfig, cells: &[(f64, f64)]) -> Result<Vec<SweepResultRow>, HarnessError> {
    if cells.is_empty() {
        return Err(HarnessError::Invalid("sweep needs at least one (beta, gamma) cell".into()));
    }
    base.validate()?;
    Ok(cells
        .par_iter()
        .map(|&(beta, gamma)| {
            let cfg = with_weights(base, beta, gamma);
            let outcome = cfg
                .validate()
                .map_err(HarnessError::from)
                .and_then(|_| Ok(run_scenario_with(&cfg, usize::MAX, &mut NullSink)?));
            match outcome {
                Ok(out) => summary_row(&cfg, &out.summary),
                Err(e) => SweepResultRow {
                    beta: Some(beta),
                    gamma: Some(gamma),
                    error: e.to_string(),
                    ..SweepResultRow::default()
                },
            }
        })
        .collect())
}

pub fn sweep_to_dir(
    base: &ScenarioConfig,
    cells: &[(f64, f64)],
    out: &Path,
) -> Result<Vec<SweepResultRow>, HarnessError> {
    let rows = sweep(base, cells)?;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    write_summary(&out.join(SUMMARY_FILE), &rows)?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Relative slack on the monotonicity checks, covering the balance
/// tolerance of the coordinator.
const TREND_SLACK: f64 = 1e-6;

fn monotone(series: &[(f64, f64)], increasing: bool) -> Result<(), String> {
    let scale = series.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(1.0);
    for w in series.windows(2) {
        let step = w[1].1 - w[0].1;
        let bad = if increasing { step < -TREND_SLACK * scale } else { step > TREND_SLACK * scale };
        if bad {
            return Err(format!("{} at {} -> {} at {}", w[0].1, w[0].0, w[1].1, w[1].0));
        }
    }
    Ok(())
}

/// Checks the weight trends on every line of the table that holds one weight
/// fixed and varies the other over at least two values:
/// battery energy and capacity loss fall with γ; battery energy rises and
/// generator energy falls with β.
pub fn check_trends(rows: &[SweepResultRow]) -> Vec<TrendCheck> {
    let ok: Vec<&SweepResultRow> = rows.iter().filter(|r| r.error.is_empty()).collect();
    let mut checks = Vec::new();
    let failed = rows.len() - ok.len();
    if failed > 0 {
        checks.push(TrendCheck {
            name: "cells".into(),
            passed: false,
            detail: format!("{failed} cells failed"),
        });
    }
    let lines = |fixed: fn(&SweepResultRow) -> Option<f64>, free: fn(&SweepResultRow) -> Option<f64>| {
        let mut keys: Vec<f64> = ok.iter().filter_map(|r| fixed(r)).collect();
        keys.sort_by(f64::total_cmp);
        keys.dedup();
        keys.into_iter()
            .filter_map(|k| {
                let mut line: Vec<&SweepResultRow> =
                    ok.iter().copied().filter(|r| fixed(r) == Some(k)).collect();
                line.sort_by(|a, b| free(a).unwrap_or(0.0).total_cmp(&free(b).unwrap_or(0.0)));
                (line.len() >= 2).then_some((k, line))
            })
            .collect::<Vec<_>>()
    };
    let mut push = |name: String, series: Vec<(f64, f64)>, increasing: bool| {
        let res = monotone(&series, increasing);
        checks.push(TrendCheck {
            name,
            passed: res.is_ok(),
            detail: res.err().unwrap_or_default(),
        });
    };
    for (beta, line) in lines(|r| r.beta, |r| r.gamma) {
        let x = |r: &SweepResultRow| r.gamma.unwrap_or(0.0);
        push(
            format!("battery energy non-increasing in gamma at beta={beta}"),
            line.iter().map(|r| (x(r), r.battery_energy_wh)).collect(),
            false,
        );
        push(
            format!("capacity loss non-increasing in gamma at beta={beta}"),
            line.iter().map(|r| (x(r), r.capacity_loss_pct)).collect(),
            false,
        );
    }
    for (gamma, line) in lines(|r| r.gamma, |r| r.beta) {
        let x = |r: &SweepResultRow| r.beta.unwrap_or(0.0);
        push(
            format!("battery energy non-decreasing in beta at gamma={gamma}"),
            line.iter().map(|r| (x(r), r.battery_energy_wh)).collect(),
            true,
        );
        push(
            format!("generator energy non-increasing in beta at gamma={gamma}"),
            line.iter().map(|r| (x(r), r.generator_energy_wh)).collect(),
            false,
        );
    }
    checks
}
