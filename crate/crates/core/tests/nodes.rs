mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sps_core::nodes::{DeviceNode, PcmNode};
use sps_core::qp::{feasibility_check, Feasibility, QpOptions};
use sps_core::HorizonProfile;

fn random_price<R: Rng>(rng: &mut R, h: usize) -> HorizonProfile {
    HorizonProfile::new((0..h).map(|_| rng.random_range(-2e7..2e7)).collect())
}

/// Feasible points of the node's constraint set, by rejection sampling of
/// ramp-respecting walks.
fn feasible_points<R: Rng>(rng: &mut R, node: &dyn DeviceNode, h: usize, n: usize) -> Vec<Vec<f64>> {
    let qp = node.local_qp(h);
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < n && tries < 50 * n {
        tries += 1;
        let mut y = qp.prev_value;
        let x: Vec<f64> = (0..h)
            .map(|k| {
                y = (y + rng.random_range(-1.0..1.0) * qp.ramp_limit).clamp(qp.lower[k], qp.upper[k]);
                y
            })
            .collect();
        if qp.max_violation(&x) == 0.0 {
            out.push(x);
        }
    }
    out
}

fn lagrangian(node: &dyn DeviceNode, lambda: &HorizonProfile, p: &[f64]) -> f64 {
    node.local_cost(p) + lambda.iter().zip(p).map(|(l, p)| l * p).sum::<f64>()
}

#[test]
fn no_feasible_direction_lowers_the_lagrangian() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let qp = QpOptions::default();
    for _ in 0..30 {
        let (fleet, _) = common::random_fleet(&mut rng, 5);
        for id in fleet.node_ids() {
            let node = fleet.node(id);
            let lambda = random_price(&mut rng, 5);
            let best = node.solve(&lambda, &qp).unwrap();
            let base = lagrangian(node, &lambda, &best.profile);
            let local = node.local_qp(5);
            assert!(local.is_feasible(&best.profile, 1e-8));
            for y in feasible_points(&mut rng, node, 5, 100) {
                let t = rng.random_range(1e-3..1.0);
                let x: Vec<f64> = best
                    .profile
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| a + t * (b - a))
                    .collect();
                let v = lagrangian(node, &lambda, &x);
                assert!(v >= base - 1e-9 * base.abs().max(1.0), "{id}: {v} < {base}");
            }
        }
    }
}

#[test]
fn soc_trajectory_follows_returned_profile() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..200 {
        let (fleet, _) = common::random_fleet(&mut rng, 5);
        for node in &fleet.pcms {
            let lambda = random_price(&mut rng, 5);
            let r = node.solve(&lambda, &QpOptions::default()).unwrap();
            let traj = r.soc_trajectory.as_ref().unwrap();
            assert_eq!(traj.len(), 6);
            assert_eq!(traj[0], node.soc0);
            let kappa = node.kappa();
            for k in 0..5 {
                let defect = traj[k + 1] - traj[k] + kappa * r.profile[k];
                assert!(defect.abs() <= 4.0 * f64::EPSILON, "defect {defect}");
            }
            assert!(traj
                .iter()
                .all(|s| *s >= node.spec.soc_min - 1e-8 && *s <= node.spec.soc_max + 1e-8));
        }
    }
}

#[test]
fn battery_at_soc_floor_is_still_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut checked = 0;
    while checked < 20 {
        let (fleet, _) = common::random_fleet(&mut rng, 5);
        for n in &fleet.pcms {
            let node = PcmNode {
                soc0: n.spec.soc_min,
                prev_power_w: 0.0,
                ..n.clone()
            };
            assert_eq!(
                feasibility_check(&node.local_qp(5)).unwrap(),
                Feasibility::Feasible
            );
            let r = node
                .solve(&HorizonProfile::filled(5, -1e9), &QpOptions::default())
                .unwrap();
            let tol = 1e-8 / node.kappa();
            let mut cum = 0.0;
            for p in r.profile.iter() {
                cum += p;
                assert!(cum <= tol, "net discharge {cum} W past the floor");
            }
            checked += 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn price_and_weight_scale_together(seed in any::<u64>(), c in 1e-2f64..1e2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fleet, _) = common::random_fleet(&mut rng, 5);
        let lambda = random_price(&mut rng, 5);
        let scaled_lambda = HorizonProfile::new(lambda.iter().map(|l| c * l).collect());
        let qp = QpOptions::default();
        for g in &fleet.pgms {
            let mut s = g.clone();
            s.spec.weight_beta *= c;
            let a = g.solve(&lambda, &qp).unwrap();
            let b = s.solve(&scaled_lambda, &qp).unwrap();
            prop_assert!(a.profile.max_abs_diff(&b.profile) <= 1e-6 * (1.0 + a.profile.norm_inf()));
        }
        for p in &fleet.pcms {
            let mut s = p.clone();
            s.spec.weight_gamma *= c;
            let a = p.solve(&lambda, &qp).unwrap();
            let b = s.solve(&scaled_lambda, &qp).unwrap();
            prop_assert!(a.profile.max_abs_diff(&b.profile) <= 1e-6 * (1.0 + a.profile.norm_inf()));
        }
    }
}
