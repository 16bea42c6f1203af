use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::path::Path;

use serde::Serialize;

use super::HarnessError;
use crate::config::ScenarioConfig;
use crate::coordinator::{centralized_solve, coordinate, CoordinatorError, CoordinatorOptions, Fleet};
use crate::qp::QpOptions;
use crate::sim::{mpc_demand, mpc_fleet};
use crate::HorizonProfile;

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub perturbations: usize,
    /// Relative bound on both the power deviation and the objective gap.
    pub threshold: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            perturbations: 100,
            threshold: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub cases: usize,
    /// Cases both solvers could balance.
    pub feasible_cases: usize,
    /// Cases both solvers reported as unbalanceable.
    pub infeasible_cases: usize,
    pub status_mismatches: usize,
    pub max_power_dev_w: f64,
    /// Largest per-step deviation over `‖p_f‖∞`.
    pub max_power_dev_rel: f64,
    pub max_objective_gap_rel: f64,
    pub threshold: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.status_mismatches == 0
            && self.max_power_dev_rel <= self.threshold
            && self.max_objective_gap_rel <= self.threshold
    }
}

const MAX_NODES: usize = 3;
const MAX_HORIZON: usize = 5;

enum Verdict {
    Agree { dev_w: f64, dev_rel: f64, gap_rel: f64 },
    BothInfeasible,
    Mismatch,
}

fn compare(fleet: &Fleet, p_f: &HorizonProfile, opts: &CoordinatorOptions) -> Result<Verdict, HarnessError> {
    let h = p_f.horizon();
    let scale = p_f.norm_inf().max(1.0);
    let dist = match coordinate(fleet, p_f, &HorizonProfile::zeros(h), opts) {
        Ok(r) => Some(r),
        Err(CoordinatorError::NodeInfeasible { .. }) => None,
        Err(e) => return Err(HarnessError::Invalid(e.to_string())),
    };
    let central = match centralized_solve(fleet, p_f, opts.bal_tol_w) {
        Ok(c) => Some(c),
        Err(CoordinatorError::Infeasible { .. } | CoordinatorError::NodeInfeasible { .. }) => None,
        Err(e) => return Err(HarnessError::Invalid(e.to_string())),
    };
    Ok(match (dist, central) {
        (Some(d), Some(c)) if d.converged => {
            let dev_w = d
                .pgm
                .iter()
                .chain(&d.pcm)
                .zip(c.pgm.iter().chain(&c.pcm))
                .map(|(a, b)| a.profile.max_abs_diff(b))
                .fold(0.0, f64::max);
            let gap = (d.objective() - c.objective).abs();
            Verdict::Agree {
                dev_w,
                dev_rel: dev_w / scale,
                gap_rel: gap / c.objective.abs().max(1.0),
            }
        }
        // Oversupply leaves the shortfall at zero, so only convergence counts.
        (Some(d), None) if !d.converged => Verdict::BothInfeasible,
        (None, None) => Verdict::BothInfeasible,
        _ => Verdict::Mismatch,
    })
}

/// Compares the distributed and centralized solutions on the scenario's first
/// MPC problem and on seeded random perturbations of it.
pub fn verify(cfg: &ScenarioConfig, vo: &VerifyOptions) -> Result<VerifyReport, HarnessError> {
    cfg.validate()?;
    if cfg.pgms.len() > MAX_NODES || cfg.pcms.len() > MAX_NODES || cfg.horizon_steps > MAX_HORIZON {
        return Err(HarnessError::Invalid(format!(
            "verify handles at most {MAX_NODES} generators, {MAX_NODES} batteries and a horizon of {MAX_HORIZON}"
        )));
    }
    let prev_g: Vec<f64> = cfg.pgms.iter().map(|g| g.initial_power()).collect();
    let prev_b: Vec<f64> = cfg.pcms.iter().map(|b| b.initial_power_w).collect();
    let soc0: Vec<f64> = cfg.pcms.iter().map(|b| b.initial_soc).collect();
    let base_fleet = mpc_fleet(cfg, &prev_g, &prev_b, &soc0);
    let base_demand = mpc_demand(cfg, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = vec![(base_fleet.clone(), base_demand.clone())];
    for _ in 0..vo.perturbations {
        let mut fleet = base_fleet.clone();
        for g in &mut fleet.pgms {
            let span = g.spec.p_max_w - g.spec.p_min_w;
            g.prev_power_w = (g.prev_power_w + 0.25 * span * rng.random_range(-1.0..1.0))
                .clamp(g.spec.p_min_w, g.spec.p_max_w);
            g.spec.weight_beta *= rng.random_range(0.25..4.0);
        }
        for b in &mut fleet.pcms {
            b.prev_power_w = rng.random_range(b.spec.p_min_w..=b.spec.p_max_w);
            b.soc0 = rng.random_range(b.spec.soc_min..=b.spec.soc_max);
            b.spec.weight_gamma *= rng.random_range(0.25..4.0);
        }
        let demand = HorizonProfile::new(
            base_demand
                .as_slice()
                .iter()
                .map(|p| p * rng.random_range(0.6..1.2))
                .collect(),
        );
        instances.push((fleet, demand));
    }

    let mut report = VerifyReport {
        threshold: vo.threshold,
        ..VerifyReport::default()
    };
    for (fleet, p_f) in &instances {
        let opts = CoordinatorOptions {
            alpha: cfg.solver.alpha,
            bal_tol_w: 1e-7 * p_f.norm_inf().max(1.0),
            max_iter: 20_000,
            qp: QpOptions {
                tol: cfg.solver.qp_tol,
                max_iter: cfg.solver.qp_max_iter,
            },
            ..CoordinatorOptions::default()
        };
        report.cases += 1;
        match compare(fleet, p_f, &opts)? {
            Verdict::Agree { dev_w, dev_rel, gap_rel } => {
                report.feasible_cases += 1;
                report.max_power_dev_w = report.max_power_dev_w.max(dev_w);
                report.max_power_dev_rel = report.max_power_dev_rel.max(dev_rel);
                report.max_objective_gap_rel = report.max_objective_gap_rel.max(gap_rel);
            }
            Verdict::BothInfeasible => report.infeasible_cases += 1,
            Verdict::Mismatch => report.status_mismatches += 1,
        }
    }
    Ok(report)
}

pub const VERIFY_FILE: &str = "verify.csv";

/// Writes `report` as a one-line `verify.csv` in `out`.
pub fn write_verify(out: &Path, report: &VerifyReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let path = out.join(VERIFY_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.serialize(report)?;
    w.flush().map_err(|e| HarnessError::io(&path, e))
}
