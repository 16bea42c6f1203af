//! Horizon-structured QPs: diagonal cost, box, ramp and cumulative-sum bounds.

pub mod active_set;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::HorizonProfile;
use active_set::{DenseQp, Hessian, LinearConstraint};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("invalid QP: {0}")]
    Invalid(String),
}

impl QpError {
    pub(crate) fn invalid(reason: impl Into<String>) -> Self {
        QpError::Invalid(reason.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// `min 1/2 Σ d_k x_k² + Σ q_k x_k` over box, ramp and cumsum constraints.
///
/// The cumulative constraint reads
/// `cumsum_lower <= cumsum_init - cumsum_coeff * (x_1 + ... + x_k) <= cumsum_upper`
/// for every `k`; `cumsum_coeff == 0` disables it. Infinite bounds and an
/// infinite ramp limit are allowed and simply dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonQp {
    pub quad_diag: Vec<f64>,
    pub lin: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub ramp_limit: f64,
    pub prev_value: f64,
    pub cumsum_coeff: f64,
    pub cumsum_init: f64,
    pub cumsum_lower: f64,
    pub cumsum_upper: f64,
}

/// Which family a constraint row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Lower(usize),
    Upper(usize),
    RampUp(usize),
    RampDown(usize),
    CumsumLower(usize),
    CumsumUpper(usize),
}

impl HorizonQp {
    /// Box-only problem with unit weights and no linear term.
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let h = lower.len();
        Self {
            quad_diag: vec![1.0; h],
            lin: vec![0.0; h],
            lower,
            upper,
            ramp_limit: f64::INFINITY,
            prev_value: 0.0,
            cumsum_coeff: 0.0,
            cumsum_init: 0.0,
            cumsum_lower: f64::NEG_INFINITY,
            cumsum_upper: f64::INFINITY,
        }
    }

    pub fn horizon(&self) -> usize {
        self.quad_diag.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let h = self.horizon();
        if h == 0 {
            return Err(QpError::invalid("horizon must be at least 1"));
        }
        if self.lin.len() != h || self.lower.len() != h || self.upper.len() != h {
            return Err(QpError::invalid(format!(
                "all per-step vectors must have length {h}"
            )));
        }
        if let Some(d) = self.quad_diag.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(QpError::invalid(format!(
                "quad_diag must be finite and > 0, got {d}"
            )));
        }
        if self.lin.iter().any(|q| !q.is_finite()) {
            return Err(QpError::invalid("lin must be finite"));
        }
        for (k, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY
            {
                return Err(QpError::invalid(format!(
                    "bad box at step {k}: [{l}, {u}]"
                )));
            }
        }
        if !(self.ramp_limit > 0.0) {
            return Err(QpError::invalid(format!(
                "ramp_limit must be > 0, got {}",
                self.ramp_limit
            )));
        }
        if !self.prev_value.is_finite() {
            return Err(QpError::invalid("prev_value must be finite"));
        }
        if !self.cumsum_coeff.is_finite() {
            return Err(QpError::invalid("cumsum_coeff must be finite"));
        }
        // The start value itself is not constrained, only steps 1..=h.
        if self.cumsum_coeff != 0.0 {
            let ok = self.cumsum_init.is_finite()
                && !self.cumsum_lower.is_nan()
                && !self.cumsum_upper.is_nan()
                && self.cumsum_lower <= self.cumsum_upper;
            if !ok {
                return Err(QpError::invalid(format!(
                    "bad cumsum data: init {} bounds [{}, {}]",
                    self.cumsum_init, self.cumsum_lower, self.cumsum_upper
                )));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.quad_diag
            .iter()
            .zip(&self.lin)
            .zip(x)
            .map(|((d, q), x)| 0.5 * d * x * x + q * x)
            .sum()
    }

    /// Constraint rows in `row · x >= rhs` form.
    pub fn rows(&self) -> Vec<(RowKind, LinearConstraint)> {
        let h = self.horizon();
        let unit = |k: usize, s: f64| {
            let mut r = vec![0.0; h];
            r[k] = s;
            r
        };
        let mut out = Vec::new();
        for k in 0..h {
            if self.lower[k].is_finite() {
                out.push((RowKind::Lower(k), LinearConstraint::new(unit(k, 1.0), self.lower[k])));
            }
            if self.upper[k].is_finite() {
                out.push((
                    RowKind::Upper(k),
                    LinearConstraint::new(unit(k, -1.0), -self.upper[k]),
                ));
            }
        }
        if self.ramp_limit.is_finite() {
            let r = self.ramp_limit;
            for k in 0..h {
                // x_k - x_{k-1} with x_{-1} = prev_value folded into the rhs.
                let mut diff = unit(k, 1.0);
                let anchor = if k == 0 {
                    self.prev_value
                } else {
                    diff[k - 1] = -1.0;
                    0.0
                };
                let neg: Vec<f64> = diff.iter().map(|v| -v).collect();
                out.push((RowKind::RampUp(k), LinearConstraint::new(neg, -r - anchor)));
                out.push((RowKind::RampDown(k), LinearConstraint::new(diff, anchor - r)));
            }
        }
        if self.cumsum_coeff != 0.0 {
            let c = self.cumsum_coeff;
            for k in 0..h {
                let partial: Vec<f64> = (0..h).map(|j| if j <= k { c } else { 0.0 }).collect();
                if self.cumsum_lower.is_finite() {
                    let neg = partial.iter().map(|v| -v).collect();
                    out.push((
                        RowKind::CumsumLower(k),
                        LinearConstraint::new(neg, self.cumsum_lower - self.cumsum_init),
                    ));
                }
                if self.cumsum_upper.is_finite() {
                    out.push((
                        RowKind::CumsumUpper(k),
                        LinearConstraint::new(partial, self.cumsum_init - self.cumsum_upper),
                    ));
                }
            }
        }
        out
    }

    /// `cumsum_init - cumsum_coeff * (x_1 + ... + x_k)` for `k = 0..=h`.
    pub fn cumsum_trajectory(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len() + 1);
        let mut s = self.cumsum_init;
        out.push(s);
        for v in x {
            s -= self.cumsum_coeff * v;
            out.push(s);
        }
        out
    }

    /// Largest constraint violation, measured in units of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows()
            .iter()
            .map(|(kind, c)| {
                let gap = (c.rhs - c.value(x)).max(0.0);
                match kind {
                    RowKind::CumsumLower(_) | RowKind::CumsumUpper(_) => {
                        gap / self.cumsum_coeff.abs()
                    }
                    _ => gap,
                }
            })
            .fold(0.0, f64::max)
    }

    /// Every row holds to `tol` relative to the size of its bound.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.rows().iter().all(|(_, c)| {
            let norm = c.row.iter().map(|a| a * a).sum::<f64>().sqrt();
            let slack = (c.value(x) - c.rhs) / norm;
            slack >= -tol * (1.0 + (c.rhs / norm).abs())
        })
    }

    fn as_dense(&self) -> DenseQp {
        DenseQp {
            hessian: Hessian::Diagonal(self.quad_diag.clone()),
            linear: self.lin.clone(),
            equalities: vec![],
            inequalities: self.rows().into_iter().map(|(_, c)| c).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub profile: HorizonProfile,
    pub objective: f64,
    pub iterations: usize,
    /// Largest constraint violation of `profile`, in units of `x`.
    pub primal_residual: f64,
    /// Relative KKT stationarity residual.
    pub stationarity_residual: f64,
    pub status: QpStatus,
}

pub fn solve(qp: &HorizonQp, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    if !(tol > 0.0) {
        return Err(QpError::invalid(format!("tol must be > 0, got {tol}")));
    }
    qp.validate()?;
    let dense = qp.as_dense();
    let sol = active_set::solve(&dense, tol, max_iter)?;

    let x = &sol.x;
    let mut grad: Vec<f64> = qp
        .quad_diag
        .iter()
        .zip(&qp.lin)
        .zip(x)
        .map(|((d, q), x)| d * x + q)
        .collect();
    for (c, u) in dense.inequalities.iter().zip(&sol.ineq_multipliers) {
        for (g, a) in grad.iter_mut().zip(&c.row) {
            *g -= u * a;
        }
    }
    let scale = 1.0
        + qp.lin.iter().fold(0.0f64, |m, q| m.max(q.abs()))
        + qp.quad_diag
            .iter()
            .zip(x)
            .fold(0.0f64, |m, (d, x)| m.max((d * x).abs()));
    let stationarity_residual = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / scale;

    Ok(QpSolution {
        objective: qp.objective(x),
        primal_residual: qp.max_violation(x),
        stationarity_residual,
        iterations: sol.iterations,
        status: sol.status,
        profile: HorizonProfile::new(sol.x),
    })
}

pub fn solve_with(qp: &HorizonQp, opts: &QpOptions) -> Result<QpSolution, QpError> {
    solve(qp, opts.tol, opts.max_iter)
}

/// Decides whether the constraint polytope is empty.
///
/// Projects the origin onto the polytope with the dual active-set method,
/// which either reaches a feasible point or proves that none exists.
pub fn feasibility_check(qp: &HorizonQp) -> Result<Feasibility, QpError> {
    let phase1 = HorizonQp {
        quad_diag: vec![1.0; qp.horizon()],
        lin: vec![0.0; qp.horizon()],
        ..qp.clone()
    };
    let sol = solve(&phase1, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(match sol.status {
        QpStatus::Infeasible => Feasibility::Infeasible,
        QpStatus::Optimal | QpStatus::MaxIter => Feasibility::Feasible,
    })
}
