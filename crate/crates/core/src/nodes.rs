//! Generator (PGM) and battery (PCM) node problems.
//!
//! For a price vector `λ` each node minimises its own cost plus `λ·p` over its
//! local constraint set. The generator pays for deviating from its rated point,
//! the battery for any nonzero power.

use thiserror::Error;

use crate::model::{BusSpec, PcmSpec, PgmSpec, SECONDS_PER_HOUR};
use crate::qp::{self, HorizonQp, QpError, QpOptions, QpStatus};
use crate::HorizonProfile;

/// Smallest quadratic weight handed to the QP kernel. Zero weights in the
/// configuration are raised to this value.
pub const WEIGHT_FLOOR: f64 = 1e-9;

pub fn effective_weight(w: f64) -> f64 {
    w.max(WEIGHT_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error("local constraint set is empty")]
    Infeasible,
    #[error("initial SoC {soc0} outside [{lo}, {hi}]")]
    SocOutOfBounds { soc0: f64, lo: f64, hi: f64 },
    #[error("price vector has length {got}, expected {expected}")]
    Horizon { got: usize, expected: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeResult {
    pub profile: HorizonProfile,
    /// `h + 1` values starting at the initial SoC (PCM only).
    pub soc_trajectory: Option<Vec<f64>>,
    /// Device cost without the price term.
    pub local_objective: f64,
    pub qp_status: QpStatus,
    pub qp_iterations: usize,
}

/// A device that answers a price broadcast with a power profile.
pub trait DeviceNode: Sync {
    fn solve(&self, lambda: &HorizonProfile, opts: &QpOptions) -> Result<NodeResult, NodeError>;
    /// Quadratic weight actually used by the solver.
    fn effective_weight(&self) -> f64;
    /// Local cost of a profile, without the price term.
    fn local_cost(&self, p: &[f64]) -> f64;
    /// The node problem at a zero price, exposing weights and constraints.
    fn local_qp(&self, h: usize) -> HorizonQp;
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgmNode {
    pub spec: PgmSpec,
    /// Last issued setpoint, anchors the first ramp constraint.
    pub prev_power_w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcmNode {
    pub spec: PcmSpec,
    pub bus: BusSpec,
    pub soc0: f64,
    pub prev_power_w: f64,
    /// MPC step length.
    pub td_s: f64,
    /// When false the SoC bounds are left out of the problem.
    pub enforce_soc: bool,
}

impl PcmNode {
    /// SoC change per watt held over one MPC step.
    pub fn kappa(&self) -> f64 {
        soc_coefficient(&self.spec, &self.bus, self.td_s)
    }
}

pub fn soc_coefficient(spec: &PcmSpec, bus: &BusSpec, td_s: f64) -> f64 {
    td_s / (spec.capacity_ah * bus.v_bus_volt * SECONDS_PER_HOUR)
}

fn pgm_qp(spec: &PgmSpec, prev_power: f64, lambda: &[f64]) -> HorizonQp {
    let h = lambda.len();
    let beta = effective_weight(spec.weight_beta);
    HorizonQp {
        quad_diag: vec![beta; h],
        lin: lambda.iter().map(|l| l - beta * spec.rated_power_w).collect(),
        lower: vec![spec.p_min_w; h],
        upper: vec![spec.p_max_w; h],
        ramp_limit: spec.ramp_limit_w_per_step,
        prev_value: prev_power,
        cumsum_coeff: 0.0,
        cumsum_init: 0.0,
        cumsum_lower: f64::NEG_INFINITY,
        cumsum_upper: f64::INFINITY,
    }
}

fn pcm_qp(node: &PcmNode, lambda: &[f64]) -> HorizonQp {
    let h = lambda.len();
    let s = &node.spec;
    let gamma = effective_weight(s.weight_gamma);
    let mut qp = HorizonQp {
        quad_diag: vec![gamma; h],
        lin: lambda.to_vec(),
        lower: vec![s.p_min_w; h],
        upper: vec![s.p_max_w; h],
        ramp_limit: s.ramp_limit_w_per_step,
        prev_value: node.prev_power_w,
        cumsum_coeff: node.kappa(),
        cumsum_init: node.soc0,
        cumsum_lower: s.soc_min,
        cumsum_upper: s.soc_max,
    };
    if !node.enforce_soc {
        qp.cumsum_lower = f64::NEG_INFINITY;
        qp.cumsum_upper = f64::INFINITY;
    }
    qp
}

fn run_qp(qp: &HorizonQp, opts: &QpOptions) -> Result<(HorizonProfile, QpStatus, usize), NodeError> {
    let sol = qp::solve_with(qp, opts)?;
    match sol.status {
        QpStatus::Infeasible => Err(NodeError::Infeasible),
        status => {
            if status == QpStatus::Optimal {
                debug_assert!(
                    qp.is_feasible(&sol.profile, 1e3 * opts.tol),
                    "node solution violates its constraints by {}",
                    sol.primal_residual
                );
            }
            Ok((sol.profile, status, sol.iterations))
        }
    }
}

/// Generator node: `min β/2 |p - p_r|² + λ·p` over box and ramp.
pub fn pgm_solve(
    lambda: &HorizonProfile,
    spec: &PgmSpec,
    prev_power: f64,
    opts: &QpOptions,
) -> Result<NodeResult, NodeError> {
    if lambda.is_empty() {
        return Err(NodeError::Horizon { got: 0, expected: 1 });
    }
    let qp = pgm_qp(spec, prev_power, lambda);
    let (profile, qp_status, qp_iterations) = run_qp(&qp, opts)?;
    Ok(NodeResult {
        local_objective: pgm_cost(spec, &profile),
        profile,
        soc_trajectory: None,
        qp_status,
        qp_iterations,
    })
}

/// Battery node: `min γ/2 |p|² + λ·p` over box, ramp and SoC bounds.
pub fn pcm_solve(
    lambda: &HorizonProfile,
    node: &PcmNode,
    opts: &QpOptions,
) -> Result<NodeResult, NodeError> {
    if lambda.is_empty() {
        return Err(NodeError::Horizon { got: 0, expected: 1 });
    }
    let s = &node.spec;
    if node.enforce_soc && !(s.soc_min <= node.soc0 && node.soc0 <= s.soc_max) {
        return Err(NodeError::SocOutOfBounds {
            soc0: node.soc0,
            lo: s.soc_min,
            hi: s.soc_max,
        });
    }
    let qp = pcm_qp(node, lambda);
    let (profile, qp_status, qp_iterations) = run_qp(&qp, opts)?;
    Ok(NodeResult {
        local_objective: pcm_cost(s, &profile),
        soc_trajectory: Some(soc_trajectory(node.soc0, node.kappa(), &profile)),
        profile,
        qp_status,
        qp_iterations,
    })
}

/// `soc_{k+1} = soc_k - κ p_k`, starting at `soc0`.
pub fn soc_trajectory(soc0: f64, kappa: f64, profile: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(profile.len() + 1);
    let mut soc = soc0;
    out.push(soc);
    for p in profile {
        soc -= kappa * p;
        out.push(soc);
    }
    out
}

pub fn pgm_cost(spec: &PgmSpec, p: &[f64]) -> f64 {
    0.5 * spec.weight_beta
        * p.iter()
            .map(|v| (v - spec.rated_power_w).powi(2))
            .sum::<f64>()
}

pub fn pcm_cost(spec: &PcmSpec, p: &[f64]) -> f64 {
    0.5 * spec.weight_gamma * p.iter().map(|v| v * v).sum::<f64>()
}

impl DeviceNode for PgmNode {
    fn solve(&self, lambda: &HorizonProfile, opts: &QpOptions) -> Result<NodeResult, NodeError> {
        pgm_solve(lambda, &self.spec, self.prev_power_w, opts)
    }

    fn effective_weight(&self) -> f64 {
        effective_weight(self.spec.weight_beta)
    }

    fn local_cost(&self, p: &[f64]) -> f64 {
        pgm_cost(&self.spec, p)
    }

    fn local_qp(&self, h: usize) -> HorizonQp {
        pgm_qp(&self.spec, self.prev_power_w, &vec![0.0; h])
    }
}

impl DeviceNode for PcmNode {
    fn solve(&self, lambda: &HorizonProfile, opts: &QpOptions) -> Result<NodeResult, NodeError> {
        pcm_solve(lambda, self, opts)
    }

    fn effective_weight(&self) -> f64 {
        effective_weight(self.spec.weight_gamma)
    }

    fn local_cost(&self, p: &[f64]) -> f64 {
        pcm_cost(&self.spec, p)
    }

    fn local_qp(&self, h: usize) -> HorizonQp {
        pcm_qp(self, &vec![0.0; h])
    }
}
