use std::collections::VecDeque;

use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::coordinator::{
    coordinate, default_balance_tol, CoordinatorError, CoordinatorOptions, Fleet, NodeId,
    StopReason,
};
use crate::model::{
    battery_algebra, load_algebra, pgm_current_step, ModelError, PlantState, SECONDS_PER_HOUR,
};
use crate::nodes::{soc_coefficient, PcmNode, PgmNode};
use crate::qp::QpOptions;
use crate::HorizonProfile;

use super::dlc::{bumpless_integrator, dlc_pgm_step};
use super::load::load_at;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("MPC solve at t = {t} s failed: {source}")]
    Coordinator { t: f64, source: CoordinatorError },
    #[error("non-finite {what} at t = {t} s")]
    NonFinite { t: f64, what: String },
    #[error("log sink: {0}")]
    Sink(String),
}

/// Plant measurements at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub p_g: Vec<f64>,
    pub i_g: Vec<f64>,
    pub p_b: Vec<f64>,
    pub i_b: Vec<f64>,
    pub soc: Vec<f64>,
    pub ah_throughput_ah: Vec<f64>,
    pub capacity_loss_ah: Vec<f64>,
    pub p_load: f64,
    pub i_load: f64,
    /// `Σp_g + Σp_b − p_load`
    pub residual_w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcRecord {
    pub t: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub residual_w: f64,
    pub shortfall_w: f64,
    pub p_f0: f64,
    pub lambda: Vec<f64>,
    pub pgm_setpoints: Vec<f64>,
    pub pcm_setpoints: Vec<f64>,
    /// SoC predicted at the activation instant, after clamping.
    pub soc0: Vec<f64>,
    /// Batteries whose SoC bounds were dropped to restore feasibility.
    pub soc_fallback: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Box,
    Ramp,
    PredictedSoc,
    PlantSoc,
    SocSaturation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub device: NodeId,
    pub kind: ViolationKind,
    pub amount: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyTotals {
    pub generator_wh: Vec<f64>,
    pub battery_discharge_wh: Vec<f64>,
    pub battery_charge_wh: Vec<f64>,
    pub load_wh: f64,
    /// `∫|residual|`
    pub imbalance_wh: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimSummary {
    pub totals: EnergyTotals,
    pub final_soc: Vec<f64>,
    pub ah_throughput_ah: Vec<f64>,
    pub capacity_loss_ah: Vec<f64>,
    pub mpc_steps: usize,
    /// MPC steps whose coordination did not reach the balance tolerance.
    pub shortfall_events: usize,
    pub fallback_events: usize,
    pub violations: Vec<Violation>,
    /// Largest gap between the SoC the MPC planned from and the plant SoC
    /// once that instant was reached.
    pub max_soc_model_error: f64,
    /// Solves delivered after their deadline. The solve is synchronous in
    /// simulated time, so this stays zero.
    pub deadline_misses: usize,
    pub total_iterations: usize,
}

pub trait SampleSink {
    fn record(&mut self, sample: &Sample) -> Result<(), SimError>;
}

impl SampleSink for Vec<Sample> {
    fn record(&mut self, sample: &Sample) -> Result<(), SimError> {
        self.push(sample.clone());
        Ok(())
    }
}

/// Discards samples.
pub struct NullSink;

impl SampleSink for NullSink {
    fn record(&mut self, _: &Sample) -> Result<(), SimError> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimLog {
    /// Every `log_every`-th plant step.
    pub samples: Vec<Sample>,
    pub mpc: Vec<MpcRecord>,
    pub summary: SimSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    pub mpc: Vec<MpcRecord>,
    pub summary: SimSummary,
}

/// Runs a scenario and keeps every `log_every`-th sample in memory.
pub fn run_scenario(cfg: &ScenarioConfig, log_every: usize) -> Result<SimLog, SimError> {
    let mut samples = Vec::new();
    let out = run_scenario_with(cfg, log_every, &mut samples)?;
    Ok(SimLog {
        samples,
        mpc: out.mpc,
        summary: out.summary,
    })
}

/// Node problems for one MPC solve, anchored at the last issued setpoints.
pub fn mpc_fleet(cfg: &ScenarioConfig, prev_g: &[f64], prev_b: &[f64], soc0: &[f64]) -> Fleet {
    Fleet {
        pgms: cfg
            .pgms
            .iter()
            .zip(prev_g)
            .map(|(g, p)| PgmNode {
                spec: g.spec.clone(),
                prev_power_w: *p,
            })
            .collect(),
        pcms: cfg
            .pcms
            .iter()
            .zip(prev_b)
            .zip(soc0)
            .map(|((b, p), soc)| PcmNode {
                spec: b.spec.clone(),
                bus: cfg.bus.clone(),
                soc0: *soc,
                prev_power_w: *p,
                td_s: cfg.mpc_period_s,
                enforce_soc: true,
            })
            .collect(),
    }
}

/// Demand forecast for a solve taken at `t`: the measured load held over the
/// horizon, or the true future load when preview is enabled.
pub fn mpc_demand(cfg: &ScenarioConfig, t: f64) -> HorizonProfile {
    let h = cfg.horizon_steps;
    if cfg.solver.load_preview {
        let (spm, delay, dt) = (cfg.steps_per_mpc(), cfg.delay_steps(), cfg.plant_dt_s);
        HorizonProfile::new(
            (0..h)
                .map(|k| load_at(t + (delay + k * spm) as f64 * dt, &cfg.load))
                .collect(),
        )
    } else {
        HorizonProfile::filled(h, load_at(t, &cfg.load))
    }
}

struct Pending {
    step: usize,
    pgm: Vec<f64>,
    pcm: Vec<f64>,
}

/// Runs a scenario, streaming every `log_every`-th sample into `sink`.
pub fn run_scenario_with(
    cfg: &ScenarioConfig,
    log_every: usize,
    sink: &mut dyn SampleSink,
) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    let log_every = log_every.max(1);
    let bus = &cfg.bus;
    let v_bus = bus.v_bus_volt;
    let dt = cfg.plant_dt_s;
    let h = cfg.horizon_steps;
    let spm = cfg.steps_per_mpc();
    let delay = cfg.delay_steps();
    let n_g = cfg.pgms.len();
    let n_b = cfg.pcms.len();
    let sol = &cfg.solver;
    let tol = 10.0 * sol.qp_tol;
    let coord_opts = CoordinatorOptions {
        alpha: sol.alpha,
        bal_tol_w: 0.0,
        max_iter: sol.max_iter,
        qp: QpOptions {
            tol: sol.qp_tol,
            max_iter: sol.qp_max_iter,
        },
        ..CoordinatorOptions::default()
    };

    let mut applied_g: Vec<f64> = cfg.pgms.iter().map(|g| g.initial_power()).collect();
    let mut applied_b: Vec<f64> = cfg.pcms.iter().map(|b| b.initial_power_w).collect();
    let mut issued_g = applied_g.clone();
    let mut issued_b = applied_b.clone();
    let mut state = PlantState::new(
        applied_g.iter().map(|p| p / v_bus).collect(),
        cfg.pcms.iter().map(|b| b.initial_soc).collect(),
    );
    let mut integ: Vec<f64> = cfg
        .pgms
        .iter()
        .zip(&state.gen_current_a)
        .map(|(g, i)| bumpless_integrator(*i, &cfg.dlc, &g.spec))
        .collect();

    let mut pending: VecDeque<Pending> = VecDeque::new();
    let mut soc_checks: VecDeque<(usize, Vec<f64>)> = VecDeque::new();
    let mut lambda = HorizonProfile::zeros(h);
    let mut mpc = Vec::new();
    let mut violations = Vec::new();
    let mut totals = EnergyTotals {
        generator_wh: vec![0.0; n_g],
        battery_discharge_wh: vec![0.0; n_b],
        battery_charge_wh: vec![0.0; n_b],
        ..EnergyTotals::default()
    };
    let mut shortfall_events = 0;
    let mut fallback_events = 0;
    let mut max_soc_model_error: f64 = 0.0;
    let mut total_iterations = 0;
    let to_wh = dt / SECONDS_PER_HOUR;
    let soc_rate: Vec<f64> = cfg
        .pcms
        .iter()
        .map(|b| 1.0 / (v_bus * b.spec.capacity_ah * SECONDS_PER_HOUR))
        .collect();

    let mut sample = Sample {
        t: 0.0,
        p_g: vec![0.0; n_g],
        i_g: vec![0.0; n_g],
        p_b: vec![0.0; n_b],
        i_b: vec![0.0; n_b],
        soc: vec![0.0; n_b],
        ah_throughput_ah: vec![0.0; n_b],
        capacity_loss_ah: vec![0.0; n_b],
        p_load: 0.0,
        i_load: 0.0,
        residual_w: 0.0,
    };

    for s in 0..cfg.total_steps() {
        let t = s as f64 * dt;

        if s % spm == 0 {
            let p_f = mpc_demand(cfg, t);

            // SoC expected when the new setpoints take effect.
            let mut predicted = Vec::with_capacity(n_b);
            for j in 0..n_b {
                let mut soc = state.soc[j];
                let mut cur = applied_b[j];
                let mut from = s;
                for p in pending.iter().take_while(|p| p.step < s + delay) {
                    soc -= soc_rate[j] * cur * (p.step - from) as f64 * dt;
                    cur = p.pcm[j];
                    from = p.step;
                }
                soc -= soc_rate[j] * cur * (s + delay - from) as f64 * dt;
                predicted.push(soc);
            }
            let soc0: Vec<f64> = predicted
                .iter()
                .zip(&cfg.pcms)
                .map(|(s, b)| s.clamp(b.spec.soc_min, b.spec.soc_max))
                .collect();
            if n_b > 0 {
                soc_checks.push_back((s + delay, predicted));
            }

            let mut fleet = mpc_fleet(cfg, &issued_g, &issued_b, &soc0);
            let opts = CoordinatorOptions {
                bal_tol_w: default_balance_tol(&p_f, sol.balance_tol_rel),
                ..coord_opts.clone()
            };
            let mut soc_fallback = vec![false; n_b];
            let report = loop {
                match coordinate(&fleet, &p_f, &lambda, &opts) {
                    Ok(r) => break r,
                    Err(CoordinatorError::NodeInfeasible {
                        node: NodeId::Pcm(j),
                        ..
                    }) if fleet.pcms[j].enforce_soc => {
                        fleet.pcms[j].enforce_soc = false;
                        soc_fallback[j] = true;
                        fallback_events += 1;
                    }
                    Err(source) => return Err(SimError::Coordinator { t, source }),
                }
            };
            total_iterations += report.iterations_used;
            if !report.converged {
                shortfall_events += 1;
            }
            lambda = report.lambda_final.clone();

            let new_g: Vec<f64> = report.pgm.iter().map(|r| r.profile[0]).collect();
            let new_b: Vec<f64> = report.pcm.iter().map(|r| r.profile[0]).collect();
            for (i, g) in cfg.pgms.iter().enumerate() {
                let p = new_g[i];
                let sp = &g.spec;
                check_box(&mut violations, t, NodeId::Pgm(i), p, sp.p_min_w, sp.p_max_w, tol);
                let ramp = sp.ramp_limit_w_per_step;
                check_excess(&mut violations, t, NodeId::Pgm(i), ViolationKind::Ramp, (p - issued_g[i]).abs(), ramp, tol);
            }
            for (j, b) in cfg.pcms.iter().enumerate() {
                let p = new_b[j];
                let sp = &b.spec;
                check_box(&mut violations, t, NodeId::Pcm(j), p, sp.p_min_w, sp.p_max_w, tol);
                let ramp = sp.ramp_limit_w_per_step;
                check_excess(&mut violations, t, NodeId::Pcm(j), ViolationKind::Ramp, (p - issued_b[j]).abs(), ramp, tol);
                let after = soc0[j] - soc_coefficient(sp, bus, cfg.mpc_period_s) * p;
                check_soc(&mut violations, t, NodeId::Pcm(j), ViolationKind::PredictedSoc, after, sp.soc_min, sp.soc_max, tol);
            }

            mpc.push(MpcRecord {
                t,
                iterations: report.iterations_used,
                converged: report.converged,
                stop: report.stop,
                residual_w: report.final_residual_w,
                shortfall_w: report.shortfall_w,
                p_f0: p_f[0],
                lambda: report.lambda_final.as_slice().to_vec(),
                pgm_setpoints: new_g.clone(),
                pcm_setpoints: new_b.clone(),
                soc0,
                soc_fallback,
            });
            issued_g.clone_from(&new_g);
            issued_b.clone_from(&new_b);
            pending.push_back(Pending {
                step: s + delay,
                pgm: new_g,
                pcm: new_b,
            });
        }

        while pending.front().is_some_and(|p| p.step <= s) {
            let p = pending.pop_front().expect("front exists");
            applied_g = p.pgm;
            applied_b = p.pcm;
        }
        while soc_checks.front().is_some_and(|c| c.0 <= s) {
            let (_, pred) = soc_checks.pop_front().expect("front exists");
            for (p, soc) in pred.iter().zip(&state.soc) {
                max_soc_model_error = max_soc_model_error.max((p - soc).abs());
            }
        }

        // Measurements at t.
        let p_load = load_at(t, &cfg.load);
        let load = load_algebra(p_load, bus)?;
        let mut supply = 0.0;
        for i in 0..n_g {
            let i_g = state.gen_current_a[i];
            let p_g = v_bus * i_g;
            sample.i_g[i] = i_g;
            sample.p_g[i] = p_g;
            totals.generator_wh[i] += p_g * to_wh;
            supply += p_g;
        }
        for (j, b) in cfg.pcms.iter().enumerate() {
            let p_b = applied_b[j];
            let op = battery_algebra(p_b, bus, &b.spec)?;
            sample.p_b[j] = p_b;
            sample.i_b[j] = op.i_b;
            sample.soc[j] = state.soc[j];
            sample.ah_throughput_ah[j] = state.ah_throughput_ah(j);
            sample.capacity_loss_ah[j] = state.capacity_loss_ah[j];
            if p_b > 0.0 {
                totals.battery_discharge_wh[j] += p_b * to_wh;
            } else {
                totals.battery_charge_wh[j] -= p_b * to_wh;
            }
            supply += p_b;
        }
        let residual = supply - p_load;
        totals.load_wh += p_load * to_wh;
        totals.imbalance_wh += residual.abs() * to_wh;
        if s % log_every == 0 {
            sample.t = t;
            sample.p_load = p_load;
            sample.i_load = load.i_l;
            sample.residual_w = residual;
            sink.record(&sample)?;
        }

        // Advance to t + dt.
        for (i, g) in cfg.pgms.iter().enumerate() {
            let i_ref = applied_g[i] / v_bus;
            let i_g = state.gen_current_a[i];
            let (v_g, next) = dlc_pgm_step(i_ref, i_g, integ[i], &cfg.dlc, bus, dt);
            integ[i] = next;
            let i_next = pgm_current_step(i_g, v_g, bus, &g.spec, dt);
            if !i_next.is_finite() {
                return Err(SimError::NonFinite {
                    t,
                    what: format!("generator {i} current"),
                });
            }
            state.gen_current_a[i] = i_next;
        }
        for (j, b) in cfg.pcms.iter().enumerate() {
            let i_b = sample.i_b[j];
            if state.advance_battery(j, i_b, &b.spec, dt) {
                violations.push(Violation {
                    t,
                    device: NodeId::Pcm(j),
                    kind: ViolationKind::SocSaturation,
                    amount: state.soc[j],
                });
            }
            if !state.soc[j].is_finite() {
                return Err(SimError::NonFinite {
                    t,
                    what: format!("battery {j} SoC"),
                });
            }
            let sp = &b.spec;
            check_soc(&mut violations, t + dt, NodeId::Pcm(j), ViolationKind::PlantSoc, state.soc[j], sp.soc_min, sp.soc_max, tol);
        }
        state.time_s = (s + 1) as f64 * dt;
    }

    let summary = SimSummary {
        totals,
        final_soc: state.soc.clone(),
        ah_throughput_ah: (0..n_b).map(|j| state.ah_throughput_ah(j)).collect(),
        capacity_loss_ah: state.capacity_loss_ah.clone(),
        mpc_steps: mpc.len(),
        shortfall_events,
        fallback_events,
        violations,
        max_soc_model_error,
        deadline_misses: 0,
        total_iterations,
    };
    Ok(SimOutcome { mpc, summary })
}

fn check_box(out: &mut Vec<Violation>, t: f64, device: NodeId, p: f64, lo: f64, hi: f64, tol: f64) {
    let below = lo - p - tol * (1.0 + lo.abs());
    let above = p - hi - tol * (1.0 + hi.abs());
    if below > 0.0 || above > 0.0 {
        out.push(Violation {
            t,
            device,
            kind: ViolationKind::Box,
            amount: below.max(above),
        });
    }
}

fn check_excess(
    out: &mut Vec<Violation>,
    t: f64,
    device: NodeId,
    kind: ViolationKind,
    value: f64,
    limit: f64,
    tol: f64,
) {
    let excess = value - limit - tol * (1.0 + limit.abs());
    if excess > 0.0 {
        out.push(Violation {
            t,
            device,
            kind,
            amount: excess,
        });
    }
}

#[allow(clippy::too_many_arguments)]
fn check_soc(
    out: &mut Vec<Violation>,
    t: f64,
    device: NodeId,
    kind: ViolationKind,
    soc: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) {
    let below = lo - soc - tol;
    let above = soc - hi - tol;
    if below > 0.0 || above > 0.0 {
        out.push(Violation {
            t,
            device,
            kind,
            amount: below.max(above),
        });
    }
}
