//! Dual gradient ascent over the node problems, and a monolithic oracle.
//!
//! The aggregator broadcasts a price vector `λ`, every node answers with its
//! minimiser, and the aggregator moves `λ` along the power-balance residual
//! `Σp − p_f`. With the Lagrangian written as `C(p) + λ·(Σp − p_f)` a deficit
//! lowers the price, which makes every node produce more.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::nodes::{DeviceNode, NodeError, NodeResult, PcmNode, PgmNode};
use crate::qp::active_set::{self, DenseQp, Hessian, LinearConstraint};
use crate::qp::{QpError, QpOptions, QpStatus};
use crate::HorizonProfile;

/// Fleets at least this large solve their nodes on the rayon pool.
const PARALLEL_THRESHOLD: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeId {
    Pgm(usize),
    Pcm(usize),
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::Pgm(i) => write!(f, "pgm{i}"),
            NodeId::Pcm(j) => write!(f, "pcm{j}"),
        }
    }
}

/// Aggregator to node.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceBroadcast {
    pub iteration: usize,
    pub lambda: HorizonProfile,
}

/// Node to aggregator.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeReply {
    pub node: NodeId,
    pub iteration: usize,
    pub result: Result<NodeResult, NodeError>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordinatorError {
    #[error("fleet has no nodes")]
    EmptyFleet,
    #[error("demand has length {got}, expected {expected}")]
    Horizon { got: usize, expected: usize },
    #[error("node {node} has no feasible profile: {source}")]
    NodeInfeasible { node: NodeId, source: NodeError },
    #[error("no allocation balances the demand, shortfall {shortfall_w} W")]
    Infeasible { shortfall_w: f64, residual_w: f64 },
    #[error("step size must be positive, got {0}")]
    Alpha(f64),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fleet {
    pub pgms: Vec<PgmNode>,
    pub pcms: Vec<PcmNode>,
}

impl Fleet {
    pub fn len(&self) -> usize {
        self.pgms.len() + self.pcms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        (0..self.pgms.len())
            .map(NodeId::Pgm)
            .chain((0..self.pcms.len()).map(NodeId::Pcm))
            .collect()
    }

    pub fn node(&self, id: NodeId) -> &dyn DeviceNode {
        match id {
            NodeId::Pgm(i) => &self.pgms[i],
            NodeId::Pcm(j) => &self.pcms[j],
        }
    }

    /// `0.9 / Σ 1/w`, below the inverse Lipschitz constant of the dual gradient.
    pub fn alpha_safe(&self) -> f64 {
        let inv: f64 = self
            .node_ids()
            .into_iter()
            .map(|id| 1.0 / self.node(id).effective_weight())
            .sum();
        0.9 / inv
    }

    /// Answers one broadcast from every node.
    pub fn respond(&self, msg: &PriceBroadcast, qp: &QpOptions) -> Vec<NodeReply> {
        let ids = self.node_ids();
        let reply = |id: &NodeId| NodeReply {
            node: *id,
            iteration: msg.iteration,
            result: self.node(*id).solve(&msg.lambda, qp),
        };
        if ids.len() >= PARALLEL_THRESHOLD {
            ids.par_iter().map(reply).collect()
        } else {
            ids.iter().map(reply).collect()
        }
    }
}

pub fn dual_update(
    lambda: &HorizonProfile,
    sum_primal: &HorizonProfile,
    p_f: &HorizonProfile,
    alpha: f64,
) -> HorizonProfile {
    debug_assert!(alpha > 0.0);
    HorizonProfile::new(
        lambda
            .iter()
            .zip(sum_primal.iter())
            .zip(p_f.iter())
            .map(|((l, s), f)| l + alpha * (s - f))
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinatorOptions {
    /// Overrides the safe step when set.
    pub alpha: Option<f64>,
    pub bal_tol_w: f64,
    pub max_iter: usize,
    pub qp: QpOptions,
    /// Window of the divergence test.
    pub stall_window: usize,
}

impl Default for CoordinatorOptions {
    fn default() -> Self {
        Self {
            alpha: None,
            bal_tol_w: 1.0,
            max_iter: 500,
            qp: QpOptions::default(),
            stall_window: 50,
        }
    }
}

/// Balance tolerance used when none is configured: `1e-4 · max(|p_f|∞, 1 W)`.
pub fn default_balance_tol(p_f: &HorizonProfile, rel: f64) -> f64 {
    rel * p_f.norm_inf().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIter,
    /// Residual stopped shrinking while the price kept growing.
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub lambda: HorizonProfile,
    pub iteration: usize,
    /// `|Σp − p_f|∞` after each round of node solves.
    pub balance_residual_history: Vec<f64>,
}

impl DualState {
    pub fn new(lambda: HorizonProfile) -> Self {
        Self {
            lambda,
            iteration: 0,
            balance_residual_history: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinationReport {
    pub pgm: Vec<NodeResult>,
    pub pcm: Vec<NodeResult>,
    /// Price that produced the reported allocation.
    pub lambda_final: HorizonProfile,
    pub converged: bool,
    pub stop: StopReason,
    pub iterations_used: usize,
    pub final_residual_w: f64,
    /// Largest per-step deficit `max(p_f − Σp, 0)`; zero when converged.
    pub shortfall_w: f64,
    pub alpha: f64,
    pub dual: DualState,
}

impl CoordinationReport {
    pub fn total(&self) -> HorizonProfile {
        sum_profiles(self.pgm.iter().chain(&self.pcm).map(|r| &r.profile))
    }

    /// Sum of the device costs, without the price term.
    pub fn objective(&self) -> f64 {
        self.pgm
            .iter()
            .chain(&self.pcm)
            .map(|r| r.local_objective)
            .sum()
    }
}

fn sum_profiles<'a>(profiles: impl Iterator<Item = &'a HorizonProfile>) -> HorizonProfile {
    let mut it = profiles.peekable();
    let h = it.peek().map_or(0, |p| p.horizon());
    let mut total = HorizonProfile::zeros(h);
    for p in it {
        total.add_assign(p);
    }
    total
}

fn deficit(p_f: &HorizonProfile, total: &HorizonProfile) -> f64 {
    p_f.iter()
        .zip(total.iter())
        .fold(0.0, |m, (f, s)| m.max(f - s))
}

/// Runs the broadcast / solve / update loop until the balance residual drops
/// below `opts.bal_tol_w`.
pub fn coordinate(
    fleet: &Fleet,
    p_f: &HorizonProfile,
    lambda_warm: &HorizonProfile,
    opts: &CoordinatorOptions,
) -> Result<CoordinationReport, CoordinatorError> {
    if fleet.is_empty() {
        return Err(CoordinatorError::EmptyFleet);
    }
    let h = p_f.horizon();
    if lambda_warm.horizon() != h {
        return Err(CoordinatorError::Horizon {
            got: lambda_warm.horizon(),
            expected: h,
        });
    }
    let alpha = opts.alpha.unwrap_or_else(|| fleet.alpha_safe());
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CoordinatorError::Alpha(alpha));
    }

    let mut state = DualState::new(lambda_warm.clone());
    let mut lambda_norms: Vec<f64> = Vec::new();
    let mut best: Option<(f64, Vec<NodeResult>, HorizonProfile)> = None;
    let mut stop = StopReason::MaxIter;

    for t in 0..opts.max_iter.max(1) {
        let msg = PriceBroadcast {
            iteration: t,
            lambda: state.lambda.clone(),
        };
        let mut results = Vec::with_capacity(fleet.len());
        for reply in fleet.respond(&msg, &opts.qp) {
            match reply.result {
                Ok(r) => results.push(r),
                Err(source) => {
                    return Err(CoordinatorError::NodeInfeasible {
                        node: reply.node,
                        source,
                    })
                }
            }
        }
        let total = sum_profiles(results.iter().map(|r| &r.profile));
        let residual = total.max_abs_diff(p_f);
        state.iteration = t + 1;
        state.balance_residual_history.push(residual);
        lambda_norms.push(state.lambda.norm_inf());

        if best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, results, state.lambda.clone()));
        }
        if residual <= opts.bal_tol_w {
            stop = StopReason::Converged;
            break;
        }
        let w = opts.stall_window;
        if w > 0 && t >= w {
            let hist = &state.balance_residual_history;
            let no_progress = residual >= hist[t - w] * (1.0 - 1e-3);
            let growing = lambda_norms[t] > lambda_norms[t - w];
            if no_progress && growing {
                stop = StopReason::Stalled;
                break;
            }
        }
        if t + 1 < opts.max_iter {
            state.lambda = dual_update(&state.lambda, &total, p_f, alpha);
        }
    }

    let (residual, results, lambda_final) = best.expect("at least one iteration");
    let mut results = results;
    let pcm = results.split_off(fleet.pgms.len());
    let converged = stop == StopReason::Converged;
    let mut report = CoordinationReport {
        pgm: results,
        pcm,
        lambda_final,
        converged,
        stop,
        iterations_used: state.iteration,
        final_residual_w: residual,
        shortfall_w: 0.0,
        alpha,
        dual: state,
    };
    if !converged {
        report.shortfall_w = deficit(p_f, &report.total()).max(0.0);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentralizedSolution {
    pub pgm: Vec<HorizonProfile>,
    pub pcm: Vec<HorizonProfile>,
    /// Multiplier estimate of the balance constraint.
    pub lambda: HorizonProfile,
    pub objective: f64,
    pub residual_w: f64,
    pub outer_iterations: usize,
    pub penalty: f64,
}

impl CentralizedSolution {
    pub fn total(&self) -> HorizonProfile {
        sum_profiles(self.pgm.iter().chain(&self.pcm))
    }
}

const CENTRAL_MAX_OUTER: usize = 200;

/// Solves the stacked problem with the balance equality handled by an
/// augmented quadratic penalty, doubling the penalty until the balance
/// residual falls below `tol_w`.
pub fn centralized_solve(
    fleet: &Fleet,
    p_f: &HorizonProfile,
    tol_w: f64,
) -> Result<CentralizedSolution, CoordinatorError> {
    if fleet.is_empty() {
        return Err(CoordinatorError::EmptyFleet);
    }
    let h = p_f.horizon();
    let ids = fleet.node_ids();
    let n_nodes = ids.len();
    let n = n_nodes * h;

    let mut weights = Vec::with_capacity(n);
    let mut linear = Vec::with_capacity(n);
    let mut rows = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let local = fleet.node(*id).local_qp(h);
        weights.extend_from_slice(&local.quad_diag);
        linear.extend_from_slice(&local.lin);
        for (_, c) in local.rows() {
            let mut row = vec![0.0; n];
            row[i * h..(i + 1) * h].copy_from_slice(&c.row);
            rows.push(LinearConstraint::new(row, c.rhs));
        }
    }

    let max_w = weights.iter().cloned().fold(0.0, f64::max);
    let mut rho = max_w;
    let mut lambda = vec![0.0; h];
    let mut prev_residual = f64::INFINITY;
    let mut stagnant = 0;
    let qp_tol = 1e-12;

    for outer in 1..=CENTRAL_MAX_OUTER {
        // 1/2 x'Dx + q'x + λ'(Ex − p_f) + ρ/2 |Ex − p_f|²
        let mut g = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&weights));
        for a in 0..n_nodes {
            for b in 0..n_nodes {
                for k in 0..h {
                    g[(a * h + k, b * h + k)] += rho;
                }
            }
        }
        let lin: Vec<f64> = (0..n)
            .map(|idx| {
                let k = idx % h;
                linear[idx] + lambda[k] - rho * p_f[k]
            })
            .collect();
        let qp = DenseQp {
            hessian: Hessian::Dense(g),
            linear: lin,
            equalities: vec![],
            inequalities: rows.clone(),
        };
        let sol = active_set::solve(&qp, qp_tol, 100_000)?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                let node = first_infeasible_node(fleet, h).unwrap_or(ids[0]);
                return Err(CoordinatorError::NodeInfeasible {
                    node,
                    source: NodeError::Infeasible,
                });
            }
            QpStatus::MaxIter => {
                return Err(QpError::invalid("stacked solve hit its iteration limit").into())
            }
        }

        let profiles: Vec<HorizonProfile> = sol
            .x
            .chunks(h)
            .map(|c| HorizonProfile::new(c.to_vec()))
            .collect();
        let total = sum_profiles(profiles.iter());
        let r: Vec<f64> = total.iter().zip(p_f.iter()).map(|(s, f)| s - f).collect();
        let residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        if residual < tol_w {
            for (l, rk) in lambda.iter_mut().zip(&r) {
                *l += rho * rk;
            }
            let mut pgm = profiles;
            let pcm = pgm.split_off(fleet.pgms.len());
            let objective = pgm
                .iter()
                .enumerate()
                .map(|(i, p)| fleet.pgms[i].local_cost(p))
                .chain(pcm.iter().enumerate().map(|(j, p)| fleet.pcms[j].local_cost(p)))
                .sum();
            return Ok(CentralizedSolution {
                pgm,
                pcm,
                lambda: HorizonProfile::new(lambda),
                objective,
                residual_w: residual,
                outer_iterations: outer,
                penalty: rho,
            });
        }

        // Only a penalty that dominates every weight makes stagnation meaningful.
        if rho >= 64.0 * max_w && residual > 0.9 * prev_residual {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        if stagnant >= 4 {
            return Err(CoordinatorError::Infeasible {
                shortfall_w: deficit(p_f, &total).max(0.0),
                residual_w: residual,
            });
        }
        for (l, rk) in lambda.iter_mut().zip(&r) {
            *l += rho * rk;
        }
        if residual > 0.25 * prev_residual {
            rho *= 2.0;
        }
        prev_residual = residual;
    }
    Err(QpError::invalid("penalty continuation did not reach the balance tolerance").into())
}

fn first_infeasible_node(fleet: &Fleet, h: usize) -> Option<NodeId> {
    fleet.node_ids().into_iter().find(|id| {
        matches!(
            crate::qp::feasibility_check(&fleet.node(*id).local_qp(h)),
            Ok(crate::qp::Feasibility::Infeasible)
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BusSpec, PcmSpec, PgmSpec};
    use approx::assert_relative_eq;

    #[test]
    fn dual_update_examples() {
        let l = HorizonProfile::new(vec![1.0, -2.0]);
        let p = HorizonProfile::new(vec![3.0, 4.0]);
        assert_eq!(dual_update(&l, &p, &p, 0.7), l);

        let z = HorizonProfile::zeros(3);
        let g = HorizonProfile::filled(3, 2.0);
        assert_eq!(dual_update(&z, &g, &z, 0.5), HorizonProfile::filled(3, 1.0));

        let once = dual_update(&z, &g, &z, 0.25);
        let twice = dual_update(&once, &g, &z, 0.25);
        assert_eq!(twice, HorizonProfile::filled(3, 1.0));
    }

    pub(crate) fn open_pgm(beta: f64, rated: f64) -> PgmNode {
        PgmNode {
            spec: PgmSpec {
                rated_power_w: rated,
                p_min_w: -1e9,
                p_max_w: 1e9,
                ramp_limit_w_per_step: 1e9,
                weight_beta: beta,
                ..PgmSpec::default()
            },
            prev_power_w: rated,
        }
    }

    pub(crate) fn open_pcm(gamma: f64) -> PcmNode {
        PcmNode {
            spec: PcmSpec {
                p_min_w: -1e9,
                p_max_w: 1e9,
                ramp_limit_w_per_step: 1e9,
                soc_min: 0.0,
                soc_max: 1.0,
                weight_gamma: gamma,
                ..PcmSpec::default()
            },
            bus: BusSpec::default(),
            soc0: 0.5,
            prev_power_w: 0.0,
            td_s: 1.0,
            enforce_soc: true,
        }
    }

    fn tight(p_f: &HorizonProfile) -> CoordinatorOptions {
        CoordinatorOptions {
            bal_tol_w: 1e-9 * p_f.norm_inf().max(1.0),
            max_iter: 5000,
            ..CoordinatorOptions::default()
        }
    }

    #[test]
    fn single_generator_takes_the_demand() {
        let (beta, rated, demand) = (2.0, 6e6, 7.5e6);
        let fleet = Fleet {
            pgms: vec![open_pgm(beta, rated)],
            pcms: vec![],
        };
        let p_f = HorizonProfile::filled(5, demand);
        let rep = coordinate(&fleet, &p_f, &HorizonProfile::zeros(5), &tight(&p_f)).unwrap();
        assert!(rep.converged);
        for (p, l) in rep.pgm[0].profile.iter().zip(rep.lambda_final.iter()) {
            assert_relative_eq!(*p, demand, max_relative = 1e-8);
            assert_relative_eq!(*l, -beta * (demand - rated), max_relative = 1e-6);
        }
    }

    #[test]
    fn two_node_split() {
        let fleet = Fleet {
            pgms: vec![open_pgm(1.0, 6e6)],
            pcms: vec![open_pcm(1.0)],
        };
        let p_f = HorizonProfile::filled(5, 10e6);
        let rep = coordinate(&fleet, &p_f, &HorizonProfile::zeros(5), &tight(&p_f)).unwrap();
        assert!(rep.converged);
        for k in 0..5 {
            assert!((rep.pgm[0].profile[k] - 8e6).abs() < 1.0);
            assert!((rep.pcm[0].profile[k] - 2e6).abs() < 1.0);
        }
        let central = centralized_solve(&fleet, &p_f, 1e-3).unwrap();
        for k in 0..5 {
            assert_relative_eq!(central.pgm[0][k], 8e6, max_relative = 1e-6);
            assert_relative_eq!(central.pcm[0][k], 2e6, max_relative = 1e-6);
            assert_relative_eq!(central.lambda[k], -2e6, max_relative = 1e-6);
        }
    }

    #[test]
    fn zero_demand_zero_rated() {
        let fleet = Fleet {
            pgms: vec![open_pgm(1.0, 0.0)],
            pcms: vec![open_pcm(1.0)],
        };
        let p_f = HorizonProfile::zeros(5);
        let rep = coordinate(&fleet, &p_f, &HorizonProfile::zeros(5), &tight(&p_f)).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations_used, 1);
        assert_eq!(rep.lambda_final, HorizonProfile::zeros(5));
        assert!(rep.total().norm_inf() < 1e-9);
        let central = centralized_solve(&fleet, &p_f, 1e-6).unwrap();
        assert!(central.total().norm_inf() < 1e-6);
    }

    #[test]
    fn central_rejects_demand_outside_box() {
        let mut g = open_pgm(1.0, 5e6);
        g.spec.p_min_w = 0.0;
        g.spec.p_max_w = 10e6;
        let fleet = Fleet {
            pgms: vec![g],
            pcms: vec![],
        };
        let p_f = HorizonProfile::filled(3, 12e6);
        match centralized_solve(&fleet, &p_f, 1.0) {
            Err(CoordinatorError::Infeasible { shortfall_w, .. }) => {
                assert!((shortfall_w - 2e6).abs() < 1e3, "{shortfall_w}");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        let rep = coordinate(&fleet, &p_f, &HorizonProfile::zeros(3), &CoordinatorOptions::default())
            .unwrap();
        assert!(!rep.converged);
        assert!((rep.shortfall_w - 2e6).abs() < 1.0);
    }

    #[test]
    fn floored_battery_weight_absorbs_deviation() {
        let mut b = open_pcm(0.0);
        b.spec.p_min_w = -3e6;
        b.spec.p_max_w = 3e6;
        let fleet = Fleet {
            pgms: vec![open_pgm(1.0, 6e6)],
            pcms: vec![b],
        };
        let p_f = HorizonProfile::filled(2, 8e6);
        let central = centralized_solve(&fleet, &p_f, 1e-2).unwrap();
        for k in 0..2 {
            assert_relative_eq!(central.pcm[0][k], 2e6, max_relative = 1e-6);
            assert_relative_eq!(central.pgm[0][k], 6e6, max_relative = 1e-6);
        }
        // Beyond the battery limit the generator takes the rest.
        let p_f = HorizonProfile::filled(2, 10e6);
        let central = centralized_solve(&fleet, &p_f, 1e-2).unwrap();
        assert_relative_eq!(central.pcm[0][0], 3e6, max_relative = 1e-6);
        assert_relative_eq!(central.pgm[0][0], 7e6, max_relative = 1e-6);
    }

    #[test]
    fn large_fleet_uses_parallel_path_deterministically() {
        let fleet = Fleet {
            pgms: (0..5).map(|i| open_pgm(1.0 + i as f64, 5e6)).collect(),
            pcms: (0..5).map(|j| open_pcm(0.5 + j as f64)).collect(),
        };
        let p_f = HorizonProfile::filled(5, 40e6);
        let opts = tight(&p_f);
        let a = coordinate(&fleet, &p_f, &HorizonProfile::zeros(5), &opts).unwrap();
        let b = coordinate(&fleet, &p_f, &HorizonProfile::zeros(5), &opts).unwrap();
        assert!(a.converged);
        assert_eq!(a, b);
    }

    #[test]
    fn node_infeasibility_is_reported() {
        let mut g = open_pgm(1.0, 5.5);
        g.spec.p_min_w = 5.0;
        g.spec.p_max_w = 6.0;
        g.spec.ramp_limit_w_per_step = 1.0;
        g.prev_power_w = 0.0;
        let fleet = Fleet {
            pgms: vec![g],
            pcms: vec![],
        };
        let p_f = HorizonProfile::filled(1, 5.0);
        assert!(matches!(
            coordinate(&fleet, &p_f, &HorizonProfile::zeros(1), &CoordinatorOptions::default()),
            Err(CoordinatorError::NodeInfeasible { node: NodeId::Pgm(0), .. })
        ));
        assert!(matches!(
            centralized_solve(&fleet, &p_f, 1e-3),
            Err(CoordinatorError::NodeInfeasible { node: NodeId::Pgm(0), .. })
        ));
    }
}
