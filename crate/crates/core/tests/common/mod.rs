//! Shared oracles and instance generators for integration tests.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sps_core::coordinator::Fleet;
use sps_core::model::{BusSpec, PcmSpec, PgmSpec};
use sps_core::nodes::{soc_trajectory, PcmNode, PgmNode};
use sps_core::qp::HorizonQp;
use sps_core::HorizonProfile;

/// One side of a two-sided constraint `lo <= a·x <= hi`.
struct Slab {
    a: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Builds the constraint slabs straight from the problem fields.
fn slabs(qp: &HorizonQp) -> Vec<Slab> {
    let h = qp.quad_diag.len();
    let e = |k: usize| {
        let mut v = vec![0.0; h];
        v[k] = 1.0;
        v
    };
    let mut out = Vec::new();
    for k in 0..h {
        out.push(Slab {
            a: e(k),
            lo: qp.lower[k],
            hi: qp.upper[k],
        });
    }
    if qp.ramp_limit.is_finite() {
        for k in 0..h {
            let mut a = e(k);
            let anchor = if k == 0 {
                qp.prev_value
            } else {
                a[k - 1] = -1.0;
                0.0
            };
            out.push(Slab {
                a,
                lo: anchor - qp.ramp_limit,
                hi: anchor + qp.ramp_limit,
            });
        }
    }
    if qp.cumsum_coeff != 0.0 {
        // lo <= init - c * S_k <= hi, rewritten on S_k.
        let c = qp.cumsum_coeff;
        for k in 0..h {
            let a: Vec<f64> = (0..h).map(|j| if j <= k { 1.0 } else { 0.0 }).collect();
            let (b1, b2) = (
                (qp.cumsum_init - qp.cumsum_upper) / c,
                (qp.cumsum_init - qp.cumsum_lower) / c,
            );
            out.push(Slab {
                a,
                lo: b1.min(b2),
                hi: b1.max(b2),
            });
        }
    }
    out
}

fn objective(qp: &HorizonQp, x: &[f64]) -> f64 {
    x.iter()
        .zip(&qp.quad_diag)
        .zip(&qp.lin)
        .map(|((x, d), q)| 0.5 * d * x * x + q * x)
        .sum()
}

/// Largest slab violation relative to `1 + |bound|`.
pub fn relative_violation(qp: &HorizonQp, x: &[f64]) -> f64 {
    slabs(qp)
        .iter()
        .map(|s| {
            let v: f64 = s.a.iter().zip(x).map(|(a, x)| a * x).sum();
            let below = (s.lo - v) / (1.0 + s.lo.abs());
            let above = (v - s.hi) / (1.0 + s.hi.abs());
            below.max(above).max(0.0)
        })
        .fold(0.0, f64::max)
}

pub struct OracleSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Enumerates every active set with at most one side per slab and at most
/// `h` rows, solves each equality-constrained KKT system and keeps the best
/// feasible point. `None` means no candidate is feasible.
pub fn enumerate(qp: &HorizonQp) -> Option<OracleSolution> {
    let h = qp.quad_diag.len();
    let slabs = slabs(qp);
    let m = slabs.len();
    let mut best: Option<OracleSolution> = None;
    let mut choice = vec![0u8; m];
    loop {
        let active: Vec<(usize, f64)> = choice
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                1 => Some((i, slabs[i].lo)),
                2 => Some((i, slabs[i].hi)),
                _ => None,
            })
            .collect();
        let usable = active.len() <= h && active.iter().all(|(_, b)| b.is_finite());
        if usable {
            if let Some(x) = kkt(qp, &slabs, &active) {
                if relative_violation(qp, &x) <= 1e-10 {
                    let obj = objective(qp, &x);
                    if best.as_ref().is_none_or(|b| obj < b.objective) {
                        best = Some(OracleSolution { x, objective: obj });
                    }
                }
            }
        }
        // Next choice vector in base 3.
        let mut i = 0;
        loop {
            if i == m {
                return best;
            }
            choice[i] += 1;
            if choice[i] == 3 {
                choice[i] = 0;
                i += 1;
            } else {
                break;
            }
        }
    }
}

fn kkt(qp: &HorizonQp, slabs: &[Slab], active: &[(usize, f64)]) -> Option<Vec<f64>> {
    let h = qp.quad_diag.len();
    let q = active.len();
    let n = h + q;
    let mut k = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for i in 0..h {
        k[(i, i)] = qp.quad_diag[i];
        rhs[i] = -qp.lin[i];
    }
    for (j, (s, b)) in active.iter().enumerate() {
        for i in 0..h {
            k[(i, h + j)] = slabs[*s].a[i];
            k[(h + j, i)] = slabs[*s].a[i];
        }
        rhs[h + j] = *b;
    }
    let lu = k.full_piv_lu();
    if !lu.is_invertible() {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    // Reject near-singular systems produced by dependent rows.
    let check = {
        let mut kk = DMatrix::zeros(n, n);
        for i in 0..h {
            kk[(i, i)] = qp.quad_diag[i];
        }
        for (j, (s, _)) in active.iter().enumerate() {
            for i in 0..h {
                kk[(i, h + j)] = slabs[*s].a[i];
                kk[(h + j, i)] = slabs[*s].a[i];
            }
        }
        (kk * &sol - &rhs).amax()
    };
    if !(check <= 1e-9 * (1.0 + rhs.amax())) {
        return None;
    }
    Some(sol.rows(0, h).iter().copied().collect())
}

/// Random horizon QP that is feasible by construction: a ramp-respecting
/// path is generated first and every bound is placed around it.
pub fn random_feasible_qp<R: Rng>(rng: &mut R, h: usize) -> HorizonQp {
    let ramp = rng.random_range(0.3..3.0);
    let prev = rng.random_range(-2.0..2.0);
    let mut path = Vec::with_capacity(h);
    let mut y: f64 = prev;
    for _ in 0..h {
        y += rng.random_range(-0.9..0.9) * ramp;
        path.push(y);
    }
    let lower: Vec<f64> = path.iter().map(|y| y - rng.random_range(0.0..3.0)).collect();
    let upper: Vec<f64> = path.iter().map(|y| y + rng.random_range(0.0..3.0)).collect();
    let quad_diag: Vec<f64> = (0..h).map(|_| rng.random_range(0.1..10.0)).collect();
    let lin: Vec<f64> = (0..h).map(|_| rng.random_range(-20.0..20.0)).collect();

    let mut qp = HorizonQp {
        quad_diag,
        lin,
        lower,
        upper,
        ramp_limit: ramp,
        prev_value: prev,
        cumsum_coeff: 0.0,
        cumsum_init: 0.0,
        cumsum_lower: f64::NEG_INFINITY,
        cumsum_upper: f64::INFINITY,
    };
    if rng.random_bool(0.7) {
        let c = rng.random_range(0.05..0.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let init = rng.random_range(0.0..1.0);
        let mut s = init;
        let (mut lo, mut hi) = (init, init);
        for p in &path {
            s -= c * p;
            lo = lo.min(s);
            hi = hi.max(s);
        }
        qp.cumsum_coeff = c;
        qp.cumsum_init = init;
        qp.cumsum_lower = lo - rng.random_range(0.0..0.5);
        qp.cumsum_upper = hi + rng.random_range(0.0..0.5);
    }
    qp
}

/// Random horizon QP with no feasibility guarantee.
pub fn random_qp<R: Rng>(rng: &mut R, h: usize) -> HorizonQp {
    let mut qp = random_feasible_qp(rng, h);
    for k in 0..h {
        let shift = rng.random_range(-4.0..4.0);
        qp.lower[k] += shift;
        qp.upper[k] += shift;
    }
    if qp.cumsum_coeff != 0.0 {
        let shift = rng.random_range(-1.0..1.0);
        qp.cumsum_lower += shift;
        qp.cumsum_upper += shift;
    }
    qp
}

/// Ramp-respecting random walk from `prev`, clipped to `[lo, hi]`.
fn walk<R: Rng>(rng: &mut R, prev: f64, lo: f64, hi: f64, ramp: f64, h: usize) -> Vec<f64> {
    let mut y = prev;
    (0..h)
        .map(|_| {
            y = (y + rng.random_range(-0.8..0.8) * ramp).clamp(lo, hi);
            y
        })
        .collect()
}

/// Random MW-scale fleet and a demand that some allocation meets exactly.
pub fn random_fleet<R: Rng>(rng: &mut R, h: usize) -> (Fleet, HorizonProfile) {
    let bus = BusSpec::default();
    let n_g = rng.random_range(1..=3);
    let n_b = rng.random_range(0..=3);
    let mut demand = vec![0.0; h];
    let mut fleet = Fleet::default();

    for _ in 0..n_g {
        let rated: f64 = rng.random_range(5e6..30e6);
        let p_min = (rated - rng.random_range(2e6..10e6)).max(0.0);
        let p_max = rated + rng.random_range(2e6..15e6);
        let ramp = rng.random_range(1e6..5e6);
        let prev = rng.random_range(p_min..p_max);
        let spec = PgmSpec {
            rated_power_w: rated,
            p_min_w: p_min,
            p_max_w: p_max,
            ramp_limit_w_per_step: ramp,
            weight_beta: rng.random_range(0.2..5.0),
            ..PgmSpec::default()
        };
        for (d, y) in demand.iter_mut().zip(walk(rng, prev, p_min, p_max, ramp, h)) {
            *d += y;
        }
        fleet.pgms.push(PgmNode {
            spec,
            prev_power_w: prev,
        });
    }

    for _ in 0..n_b {
        loop {
            let limit = rng.random_range(5e6..15e6);
            let ramp = rng.random_range(2e6..10e6);
            let spec = PcmSpec {
                capacity_ah: rng.random_range(50.0..2000.0),
                p_min_w: -limit,
                p_max_w: limit,
                ramp_limit_w_per_step: ramp,
                weight_gamma: rng.random_range(0.2..5.0),
                ..PcmSpec::default()
            };
            let node = PcmNode {
                soc0: rng.random_range(spec.soc_min + 0.02..spec.soc_max - 0.02),
                prev_power_w: rng.random_range(-limit..limit),
                spec,
                bus: bus.clone(),
                td_s: 1.0,
                enforce_soc: true,
            };
            let path = walk(rng, node.prev_power_w, -limit, limit, ramp, h);
            let traj = soc_trajectory(node.soc0, node.kappa(), &path);
            if traj
                .iter()
                .all(|s| (node.spec.soc_min..=node.spec.soc_max).contains(s))
            {
                for (d, y) in demand.iter_mut().zip(&path) {
                    *d += y;
                }
                fleet.pcms.push(node);
                break;
            }
        }
    }
    (fleet, HorizonProfile::new(demand))
}
