use std::collections::HashMap;

use dbl_core::optimizer::{
    branch_and_bound, enumerate_oracle, write_search_log, MonteCarloEvaluator, Problem, SyntheticEvaluator,
};
use dbl_core::sim::SimOptions;
use dbl_core::{reference, ConstraintSpec, DeploymentPattern, LookaheadController};
use proptest::prelude::*;

const CANDIDATES: [u32; 10] = [2, 5, 11, 17, 20, 21, 25, 29, 33, 34];

fn reference_problem(candidates: &[u32], influence: f64, budget: f64) -> Problem {
    let line = reference::line();
    Problem::from_line(
        &line,
        candidates,
        ConstraintSpec {
            influence_limit: influence,
            budget_limit: budget,
        },
    )
    .unwrap()
}

fn subset_key(p: &DeploymentPattern, ids: &[u32]) -> usize {
    ids.iter()
        .enumerate()
        .filter(|(_, id)| p.contains_id(**id))
        .map(|(k, _)| 1 << k)
        .sum()
}

/// Whether removing a location never lowers the tabulated objective.
fn is_monotone(values: &[f64], n: usize) -> bool {
    (0..1usize << n).all(|mask| (0..n).filter(|k| mask & (1 << k) != 0).all(|k| values[mask & !(1 << k)] >= values[mask]))
}

prop_compose! {
    fn instance()(n in 1usize..=8)(
        costs in prop::collection::vec((0.0f64..5.0, 0.0f64..12.0), n),
        influence in 0.0f64..25.0,
        budget in 0.0f64..70.0,
        values in prop::collection::vec(0u32..40, 1 << n),
        monotone in any::<bool>(),
    ) -> (Problem, Vec<f64>) {
        let rows: Vec<_> = costs.iter().enumerate().map(|(k, c)| (k as u32 + 1, c.0, c.1)).collect();
        let problem = Problem::new(&rows, ConstraintSpec { influence_limit: influence, budget_limit: budget });
        let mut table: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let n = costs.len();
        if monotone {
            // each subset scores at least as high as any superset
            let full = (1 << n) - 1;
            for mask in (0..=full).rev() {
                for k in 0..n {
                    if mask & (1 << k) == 0 {
                        let sup = mask | (1 << k);
                        table[mask] = table[mask].max(table[sup]);
                    }
                }
            }
        }
        (problem, table)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bound_search_agrees_with_enumeration((problem, table) in instance()) {
        let ids = problem.candidates.clone();
        let f = SyntheticEvaluator(|p: &DeploymentPattern| table[subset_key(p, &ids)]);
        let bb = branch_and_bound(&problem, &f).unwrap();
        let oracle = enumerate_oracle(&problem, &f).unwrap();
        let n = ids.len();
        prop_assert!(bb.nodes_generated <= 1 << n);
        prop_assert!(problem.check(&bb.optimal.ids().collect::<Vec<_>>()).feasible);
        prop_assert_eq!(bb.objective, table[subset_key(&bb.optimal, &ids)]);
        if is_monotone(&table, n) {
            prop_assert_eq!(bb.objective, oracle.objective);
            prop_assert!(bb.monotonicity_violations.is_empty());
        } else {
            prop_assert!(bb.objective >= oracle.objective);
        }
    }

    #[test]
    fn every_node_is_a_distinct_subset((problem, table) in instance()) {
        let ids = problem.candidates.clone();
        let f = SyntheticEvaluator(|p: &DeploymentPattern| table[subset_key(p, &ids)]);
        let bb = branch_and_bound(&problem, &f).unwrap();
        let mut seen = HashMap::new();
        for node in &bb.nodes {
            let mut key = node.chosen.clone();
            key.sort_unstable();
            prop_assert!(seen.insert(key, node.id).is_none());
            if let (Some(parent), Some(removed)) = (node.parent, node.removed) {
                let mut expect = bb.nodes[parent].chosen.clone();
                expect.retain(|&i| i != removed);
                prop_assert_eq!(&node.chosen, &expect);
            }
        }
        prop_assert_eq!(bb.feasible_nodes, bb.nodes.iter().filter(|n| n.feasible).count());
    }
}

#[test]
fn published_optimal_sets_reproduce_their_cost_sums() {
    let problem = reference_problem(&CANDIDATES, f64::MAX, f64::MAX);
    let rows: [(&[u32], f64, f64); 7] = [
        (&[5, 11, 20, 21, 25, 29, 33, 34], 23.6, 69.29),
        (&[2, 5, 11, 17, 21, 29, 33], 20.0, 65.48),
        (&[2, 5, 11, 17, 25, 29], 16.65, 59.97),
        (&[5, 17, 21, 33, 34], 14.55, 44.62),
        (&[5, 17, 21, 25, 29], 14.15, 47.69),
        (&[2, 11, 17, 25, 29], 14.0, 49.02),
        (&[5, 17, 29, 34], 11.55, 36.39),
    ];
    for (set, f1, f2) in rows {
        let c = problem.check(set);
        assert!((c.influence_sum - f1).abs() <= 0.01, "{set:?}: {}", c.influence_sum);
        assert!((c.money_sum - f2).abs() <= 0.01, "{set:?}: {}", c.money_sum);
    }
}

#[test]
fn five_location_instance_prunes_and_matches_enumeration() {
    let problem = reference_problem(&[2, 5, 17, 20, 25], 10.0, 1e12);
    let f = SyntheticEvaluator(|p: &DeploymentPattern| 100.0 - 10.0 * p.len() as f64 + p.ids().next().unwrap_or(0) as f64 / 100.0);
    let bb = branch_and_bound(&problem, &f).unwrap();
    let oracle = enumerate_oracle(&problem, &f).unwrap();
    assert!(bb.nodes_generated < 32);
    assert_eq!(bb.objective, oracle.objective);
    assert!(bb.influence_sum <= 10.0);
}

#[test]
fn simulated_objective_matches_enumeration_with_shared_seeds() {
    let line = reference::line();
    let problem = reference_problem(&[2, 17, 25], 6.0, 1e12);
    let ctl = LookaheadController::new(&line, 1, 0.5).unwrap();
    let evaluator = MonteCarloEvaluator {
        line: &line,
        controller: &ctl,
        reps: 2,
        base_seed: 77,
        common_random_numbers: true,
        options: SimOptions::default(),
    };
    let bb = branch_and_bound(&problem, &evaluator).unwrap();
    let oracle = enumerate_oracle(&problem, &evaluator).unwrap();
    assert_eq!(bb.objective, oracle.objective);
    assert!(bb.nodes_generated <= 8);

    let mut buf = Vec::new();
    write_search_log(&bb, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), bb.nodes_generated + 1);
}
