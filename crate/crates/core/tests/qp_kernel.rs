mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sps_core::qp::{feasibility_check, solve, Feasibility, HorizonQp, QpStatus};

const TOL: f64 = 1e-10;

#[test]
fn agrees_with_enumeration_on_small_horizons() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..300 {
        let h = 1 + case % 3;
        let qp = common::random_feasible_qp(&mut rng, h);
        let oracle = common::enumerate(&qp).expect("instance is feasible by construction");
        let sol = solve(&qp, TOL, 10_000).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}: {qp:?}");
        let gap = (sol.objective - oracle.objective).abs();
        assert!(
            gap <= 1e-8 * (1.0 + oracle.objective.abs()),
            "case {case}: objective {} vs oracle {}",
            sol.objective,
            oracle.objective
        );
        for (a, b) in sol.profile.iter().zip(&oracle.x) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "case {case}");
        }
        assert!(common::relative_violation(&qp, &sol.profile) <= 1e-8);
    }
}

#[test]
fn infeasibility_verdict_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut empty, mut nonempty) = (0, 0);
    for case in 0..400 {
        let h = 1 + case % 3;
        let qp = common::random_qp(&mut rng, h);
        let oracle = common::enumerate(&qp);
        let verdict = feasibility_check(&qp).unwrap();
        let sol = solve(&qp, TOL, 10_000).unwrap();
        match oracle {
            None => {
                empty += 1;
                assert_eq!(verdict, Feasibility::Infeasible, "case {case}: {qp:?}");
                assert_eq!(sol.status, QpStatus::Infeasible, "case {case}");
            }
            Some(o) => {
                nonempty += 1;
                assert_eq!(verdict, Feasibility::Feasible, "case {case}: {qp:?}");
                assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
                assert!((sol.objective - o.objective).abs() <= 1e-8 * (1.0 + o.objective.abs()));
            }
        }
    }
    // Both verdicts have to be exercised for the test to mean anything.
    assert!(empty > 20 && nonempty > 20, "empty {empty}, nonempty {nonempty}");
}

#[test]
fn handles_megawatt_scale_data() {
    // Generator-like instance: weights of order one, powers of order 1e7.
    let qp = HorizonQp {
        quad_diag: vec![1.0; 5],
        lin: vec![-36e6 + 5e6; 5],
        lower: vec![0.0; 5],
        upper: vec![40e6; 5],
        ramp_limit: 2e6,
        prev_value: 36e6,
        cumsum_coeff: 0.0,
        cumsum_init: 0.0,
        cumsum_lower: f64::NEG_INFINITY,
        cumsum_upper: f64::INFINITY,
    };
    let sol = solve(&qp, 1e-8, 10_000).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    let expect = [34e6, 32e6, 31e6, 31e6, 31e6];
    for (a, b) in sol.profile.iter().zip(expect) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}

fn arb_qp(h: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = HorizonQp> {
    (any::<u64>(), h).prop_map(|(seed, h)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::random_feasible_qp(&mut rng, h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimal_profiles_are_feasible(qp in arb_qp(1..=8)) {
        let sol = solve(&qp, 1e-9, 10_000).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        prop_assert!(common::relative_violation(&qp, &sol.profile) <= 1e-8);
        prop_assert!(qp.is_feasible(&sol.profile, 1e-8));
    }

    #[test]
    fn invariant_under_cost_scaling(qp in arb_qp(1..=6), c in 1e-3f64..1e3) {
        let base = solve(&qp, 1e-10, 10_000).unwrap();
        let scaled_qp = HorizonQp {
            quad_diag: qp.quad_diag.iter().map(|d| c * d).collect(),
            lin: qp.lin.iter().map(|q| c * q).collect(),
            ..qp.clone()
        };
        let scaled = solve(&scaled_qp, 1e-10, 10_000).unwrap();
        for (a, b) in base.profile.iter().zip(scaled.profile.iter()) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
        }
        prop_assert!((scaled.objective - c * base.objective).abs()
            <= 1e-8 * (1.0 + (c * base.objective).abs()));
    }

    #[test]
    fn no_sampled_feasible_point_does_better(qp in arb_qp(2..=5), seed in any::<u64>()) {
        let sol = solve(&qp, 1e-10, 10_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = qp.quad_diag.len();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..h)
                .map(|k| rng.random_range(qp.lower[k]..=qp.upper[k]))
                .collect();
            if common::relative_violation(&qp, &x) > 0.0 {
                continue;
            }
            let obj = qp.objective(&x);
            prop_assert!(obj >= sol.objective - 1e-9 * (1.0 + obj.abs()),
                "sample {obj} beats solver {}", sol.objective);
        }
    }
}
