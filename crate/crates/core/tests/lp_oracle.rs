mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use retrobranch::lp::{solve_lp, LocalBounds, LpSolver, LpStatus};

#[test]
fn knapsack_matches_vertex_enumeration() {
    use retrobranch::milp::{MilpInstance, Row, Sense};
    let inst = MilpInstance::new(
        "k",
        vec![-1.0, -2.0],
        vec![Row::new(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.5)],
        vec![0.0; 2],
        vec![1.0; 2],
        vec![false; 2],
    );
    assert_eq!(common::lp_vertex_enumeration(&inst), Some(-2.5));
    let r = solve_lp(&inst, &LocalBounds::new(), 100).unwrap();
    assert!((r.objective + 2.5).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_agrees_with_vertex_enumeration(seed in any::<u64>(), n in 1usize..=5, m in 0usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_lp(&mut rng, n, m);
        let oracle = common::lp_vertex_enumeration(&inst);
        let r = solve_lp(&inst, &LocalBounds::new(), 10_000).unwrap();
        match oracle {
            None => prop_assert_eq!(r.status, LpStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(r.status, LpStatus::Optimal);
                prop_assert!((r.objective - v).abs() < 1e-6, "simplex {} oracle {}", r.objective, v);
                prop_assert!(inst.rows.iter().all(|row| row.is_satisfied(&r.x, 1e-6)));
            }
        }
    }

    #[test]
    fn tightening_never_decreases_the_optimum(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_lp(&mut rng, n, m);
        let base = solve_lp(&inst, &LocalBounds::new(), 10_000).unwrap();
        prop_assume!(base.is_optimal());
        let j = (seed as usize) % n;
        let mid = 0.5 * (inst.lower[j] + inst.upper[j]);
        for child in [
            LocalBounds::new().with_upper(&inst, j, mid),
            LocalBounds::new().with_lower(&inst, j, mid),
        ] {
            let r = solve_lp(&inst, &child, 10_000).unwrap();
            if r.is_optimal() {
                prop_assert!(r.objective >= base.objective - 1e-7);
            }
        }
    }

    #[test]
    fn warm_started_children_match_cold_solves(seed in any::<u64>(), n in 2usize..=6, m in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_lp(&mut rng, n, m);
        let solver = LpSolver::new(&inst);
        let parent = solver.solve(&LocalBounds::new(), None, 10_000).unwrap();
        prop_assume!(parent.is_optimal());
        let hint = parent.warm_hint();
        for j in 0..n {
            let v = parent.x[j];
            for child in [
                LocalBounds::new().with_upper(&inst, j, (v - 0.5).floor()),
                LocalBounds::new().with_lower(&inst, j, (v + 0.5).ceil()),
            ] {
                let cold = solver.solve(&child, None, 10_000).unwrap();
                let warm = solver.solve(&child, hint.as_ref(), 10_000).unwrap();
                prop_assert_eq!(cold.status, warm.status);
                if cold.is_optimal() {
                    prop_assert!((cold.objective - warm.objective).abs() < 1e-9,
                        "cold {} warm {}", cold.objective, warm.objective);
                }
            }
        }
    }
}
