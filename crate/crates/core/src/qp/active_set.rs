//! Dual active-set method for strictly convex QPs.
//!
//! Solves
//!
//! ```text
//!     minimize    1/2 x' G x + q' x
//!     subject to  a_i' x  = b_i      (equalities)
//!                 a_j' x >= b_j      (inequalities)
//! ```
//!
//! starting from the unconstrained minimiser and adding violated constraints
//! one at a time (Goldfarb-Idnani). Each iterate is optimal for the constraints
//! in its working set, so the method stops exactly when the iterate becomes
//! primal feasible; an empty constraint set is reported when a violated
//! constraint can be neither reached nor traded against a working constraint.
//!
//! The projected directions are recomputed from the working set at every step
//! instead of being maintained by rank-one updates. The problems solved here
//! have at most a few dozen variables.

use nalgebra::{DMatrix, DVector};

use super::{QpError, QpStatus};

#[derive(Clone, Debug, PartialEq)]
pub enum Hessian {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// `row · x = rhs` or `row · x >= rhs`, depending on where it is placed.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub row: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(row: Vec<f64>, rhs: f64) -> Self {
        Self { row, rhs }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.row.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseQp {
    pub hessian: Hessian,
    pub linear: Vec<f64>,
    pub equalities: Vec<LinearConstraint>,
    pub inequalities: Vec<LinearConstraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSetSolution {
    pub x: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// Multipliers of the original (unnormalised) rows.
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
}

enum Metric {
    Diagonal(Vec<f64>),
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

impl Metric {
    fn new(h: &Hessian, n: usize) -> Result<Self, QpError> {
        match h {
            Hessian::Diagonal(d) => {
                if d.len() != n {
                    return Err(QpError::invalid("hessian diagonal length mismatch"));
                }
                if let Some(v) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return Err(QpError::invalid(format!(
                        "hessian diagonal must be strictly positive, got {v}"
                    )));
                }
                Ok(Metric::Diagonal(d.iter().map(|v| 1.0 / v).collect()))
            }
            Hessian::Dense(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(QpError::invalid("hessian shape mismatch"));
                }
                m.clone()
                    .cholesky()
                    .map(Metric::Dense)
                    .ok_or_else(|| QpError::invalid("hessian is not positive definite"))
            }
        }
    }

    fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Metric::Diagonal(inv) => {
                DVector::from_iterator(v.len(), v.iter().zip(inv).map(|(a, b)| a * b))
            }
            Metric::Dense(chol) => chol.solve(v),
        }
    }
}

struct Row {
    a: DVector<f64>,
    /// `G^-1 a`, cached.
    ginv_a: DVector<f64>,
    b: f64,
    norm: f64,
    tol: f64,
}

struct Working {
    row: usize,
    /// Orientation of the row inside the working set (equalities may flip).
    sign: f64,
    u: f64,
    equality: bool,
}

const DEPENDENCE_EPS: f64 = 1e-12;
const RATIO_EPS: f64 = 1e-12;

/// Solves a dense QP. `tol` is the relative feasibility tolerance.
pub fn solve(qp: &DenseQp, tol: f64, max_iter: usize) -> Result<ActiveSetSolution, QpError> {
    let n = qp.linear.len();
    let metric = Metric::new(&qp.hessian, n)?;
    let q = DVector::from_column_slice(&qp.linear);
    if q.iter().any(|v| !v.is_finite()) {
        return Err(QpError::invalid("linear term must be finite"));
    }

    let n_eq = qp.equalities.len();
    let mut rows: Vec<Option<Row>> = Vec::with_capacity(n_eq + qp.inequalities.len());
    let mut trivially_infeasible = false;
    for (k, c) in qp.equalities.iter().chain(&qp.inequalities).enumerate() {
        if c.row.len() != n {
            return Err(QpError::invalid("constraint row length mismatch"));
        }
        let a = DVector::from_column_slice(&c.row);
        let norm = a.norm();
        if !(norm.is_finite() && c.rhs.is_finite()) {
            return Err(QpError::invalid("constraint data must be finite"));
        }
        if norm == 0.0 {
            let violated = if k < n_eq {
                c.rhs.abs() > tol
            } else {
                c.rhs > tol
            };
            trivially_infeasible |= violated;
            rows.push(None);
            continue;
        }
        let a = a / norm;
        let b = c.rhs / norm;
        let ginv_a = metric.apply_inverse(&a);
        rows.push(Some(Row {
            a,
            ginv_a,
            b,
            norm,
            tol: 1e-2 * tol * (1.0 + b.abs()),
        }));
    }

    let mut x = -metric.apply_inverse(&q);
    let mut working: Vec<Working> = Vec::new();
    let mut iterations = 0usize;
    let mut status = QpStatus::Optimal;

    if trivially_infeasible {
        status = QpStatus::Infeasible;
    }

    // Equalities enter first and never leave.
    for i in 0..n_eq {
        if status != QpStatus::Optimal {
            break;
        }
        let Some(row) = &rows[i] else { continue };
        iterations += 1;
        let s = row.a.dot(&x) - row.b;
        let sign = if s > 0.0 { -1.0 } else { 1.0 };
        let np = &row.a * sign;
        let ginv_np = &row.ginv_a * sign;
        let (z, r) = directions(&rows, &working, &np, &ginv_np);
        let zn = z.dot(&np);
        if zn <= DEPENDENCE_EPS * np.dot(&ginv_np) {
            if s.abs() <= row.tol {
                continue;
            }
            status = QpStatus::Infeasible;
            break;
        }
        let t = s.abs() / zn;
        x += &z * t;
        for (w, rj) in working.iter_mut().zip(r.iter()) {
            w.u -= t * rj;
        }
        working.push(Working {
            row: i,
            sign,
            u: t,
            equality: true,
        });
    }

    'outer: while status == QpStatus::Optimal {
        let mut pick = None;
        let mut worst = 0.0;
        for (i, row) in rows.iter().enumerate().skip(n_eq) {
            let Some(row) = row else { continue };
            if working.iter().any(|w| w.row == i) {
                continue;
            }
            let s = row.a.dot(&x) - row.b;
            if s < -row.tol && s < worst {
                worst = s;
                pick = Some(i);
            }
        }
        let Some(p) = pick else { break };
        let prow = rows[p].as_ref().expect("picked rows exist");
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                status = QpStatus::MaxIter;
                break 'outer;
            }
            let (z, r) = directions(&rows, &working, &prow.a, &prow.ginv_a);
            let s_p = prow.a.dot(&x) - prow.b;

            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, (w, rj)) in working.iter().zip(r.iter()).enumerate() {
                if !w.equality && *rj > RATIO_EPS {
                    let ratio = w.u / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }

            let zn = z.dot(&prow.a);
            let reachable = zn > DEPENDENCE_EPS * prow.a.dot(&prow.ginv_a);
            let t2 = if reachable {
                (-s_p / zn).max(0.0)
            } else {
                f64::INFINITY
            };

            if !reachable && drop.is_none() {
                status = QpStatus::Infeasible;
                break 'outer;
            }

            if t2 <= t1 {
                x += &z * t2;
                update_multipliers(&mut working, &r, t2);
                u_p += t2;
                working.push(Working {
                    row: p,
                    sign: 1.0,
                    u: u_p,
                    equality: false,
                });
                break;
            }

            if reachable {
                x += &z * t1;
            }
            update_multipliers(&mut working, &r, t1);
            u_p += t1;
            working.remove(drop.expect("partial step has a blocking row"));
        }
    }

    let mut eq_multipliers = vec![0.0; n_eq];
    let mut ineq_multipliers = vec![0.0; qp.inequalities.len()];
    for w in &working {
        let row = rows[w.row].as_ref().expect("working rows exist");
        let u = w.sign * w.u / row.norm;
        if w.equality {
            eq_multipliers[w.row] = u;
        } else {
            ineq_multipliers[w.row - n_eq] = u;
        }
    }

    Ok(ActiveSetSolution {
        x: x.iter().copied().collect(),
        status,
        iterations,
        eq_multipliers,
        ineq_multipliers,
    })
}

fn update_multipliers(working: &mut [Working], r: &DVector<f64>, t: f64) {
    for (w, rj) in working.iter_mut().zip(r.iter()) {
        w.u -= t * rj;
        if !w.equality && w.u < 0.0 {
            w.u = 0.0;
        }
    }
}

/// Primal step direction `z = H n` and working-set multiplier change
/// `r = N* n` for a candidate row `n`.
fn directions(
    rows: &[Option<Row>],
    working: &[Working],
    np: &DVector<f64>,
    ginv_np: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let q = working.len();
    if q == 0 {
        return (ginv_np.clone(), DVector::zeros(0));
    }
    let n = np.len();
    let mut nmat = DMatrix::zeros(n, q);
    let mut wmat = DMatrix::zeros(n, q);
    for (j, w) in working.iter().enumerate() {
        let row = rows[w.row].as_ref().expect("working rows exist");
        nmat.set_column(j, &(&row.a * w.sign));
        wmat.set_column(j, &(&row.ginv_a * w.sign));
    }
    let m = nmat.transpose() * &wmat;
    let rhs = wmat.transpose() * np;
    let r = match m.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => m
            .full_piv_lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(q)),
    };
    let z = ginv_np - wmat * &r;
    (z, r)
}
