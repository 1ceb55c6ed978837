use std::collections::HashSet;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::DeploymentPattern;

use super::{Evaluator, Memoized, Problem};

/// Upper bound before any feasible pattern is known.
const NO_BOUND: f64 = f64::MAX;

/// Largest candidate set accepted by [`enumerate_oracle`].
pub const ORACLE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Location removed on the branch into this node.
    pub removed: Option<u32>,
    pub chosen: Vec<u32>,
    pub objective: f64,
    pub feasible: bool,
    /// Whether the node was discarded by the bound at least once.
    pub pruned: bool,
}

/// A child that scored below its parent although it has fewer lanes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    pub parent: usize,
    pub child: usize,
    pub parent_objective: f64,
    pub child_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub optimal: DeploymentPattern,
    pub objective: f64,
    pub nodes_generated: usize,
    pub feasible_nodes: usize,
    /// Distinct patterns handed to the underlying evaluator.
    pub evaluations: usize,
    pub influence_sum: f64,
    pub money_sum: f64,
    pub nodes: Vec<SearchNode>,
    pub monotonicity_violations: Vec<MonotonicityViolation>,
}

struct Frame {
    node: usize,
    chosen: Vec<u32>,
    remaining: Vec<u32>,
}

/// Depth-first search from the full candidate set downwards. A node is cut
/// when its objective is no better than the incumbent; a feasible node
/// becomes the incumbent and is not expanded; otherwise its next alternative
/// location is removed to form a child, which inherits the alternatives that
/// follow it.
pub fn branch_and_bound<E: Evaluator>(problem: &Problem, evaluator: E) -> Result<SearchResult> {
    if !problem.check(&[]).feasible {
        return Err(Error::Infeasible);
    }
    let eval = Memoized::new(evaluator);
    let mut nodes: Vec<SearchNode> = Vec::new();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut violations = Vec::new();

    let mut spawn = |nodes: &mut Vec<SearchNode>,
                     parent: Option<usize>,
                     removed: Option<u32>,
                     chosen: &[u32]|
     -> Result<usize> {
        let mut key = chosen.to_vec();
        key.sort_unstable();
        assert!(seen.insert(key), "search visited {chosen:?} twice");
        let objective = eval.evaluate(&DeploymentPattern::unchecked(chosen.iter().copied()))?;
        let id = nodes.len();
        nodes.push(SearchNode {
            id,
            parent,
            removed,
            chosen: chosen.to_vec(),
            objective,
            feasible: problem.check(chosen).feasible,
            pruned: false,
        });
        Ok(id)
    };

    let mut incumbent: Option<usize> = None;
    let mut bound = NO_BOUND;
    let root = spawn(&mut nodes, None, None, &problem.candidates)?;
    let mut stack = vec![Frame {
        node: root,
        chosen: problem.candidates.clone(),
        remaining: problem.candidates.clone(),
    }];
    // a node reached by retracing is judged again against the current bound
    while let Some(frame) = stack.last_mut() {
        let n = frame.node;
        if nodes[n].objective >= bound {
            nodes[n].pruned = true;
            stack.pop();
            continue;
        }
        if nodes[n].feasible {
            incumbent = Some(n);
            bound = nodes[n].objective;
            stack.pop();
            continue;
        }
        if frame.remaining.is_empty() {
            stack.pop();
            continue;
        }
        let removed = frame.remaining.remove(0);
        let chosen: Vec<u32> = frame.chosen.iter().copied().filter(|&i| i != removed).collect();
        let remaining = frame.remaining.clone();
        let child = spawn(&mut nodes, Some(n), Some(removed), &chosen)?;
        if nodes[child].objective < nodes[n].objective {
            violations.push(MonotonicityViolation {
                parent: n,
                child,
                parent_objective: nodes[n].objective,
                child_objective: nodes[child].objective,
            });
        }
        stack.push(Frame {
            node: child,
            chosen,
            remaining,
        });
    }

    let best = incumbent.ok_or(Error::Infeasible)?;
    assert!(bound < NO_BOUND, "bound never tightened");
    let chosen = &nodes[best].chosen;
    let check = problem.check(chosen);
    assert!(check.feasible, "incumbent {chosen:?} violates the constraints");
    Ok(SearchResult {
        optimal: DeploymentPattern::unchecked(chosen.iter().copied()),
        objective: bound,
        nodes_generated: nodes.len(),
        feasible_nodes: nodes.iter().filter(|n| n.feasible).count(),
        evaluations: eval.evaluations(),
        influence_sum: check.influence_sum,
        money_sum: check.money_sum,
        nodes,
        monotonicity_violations: violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub optimal: DeploymentPattern,
    pub objective: f64,
    pub feasible_subsets: usize,
}

/// Evaluates every feasible subset of the candidates. Ties go to the
/// lexicographically smallest sorted id list.
pub fn enumerate_oracle<E: Evaluator>(problem: &Problem, evaluator: E) -> Result<OracleResult> {
    let n = problem.candidates.len();
    if n > ORACLE_LIMIT {
        return Err(Error::TooManyLocations(n));
    }
    let eval = Memoized::new(evaluator);
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut feasible_subsets = 0;
    for mask in 0u32..(1 << n) {
        let mut chosen: Vec<u32> = (0..n)
            .filter(|&k| mask & (1 << k) != 0)
            .map(|k| problem.candidates[k])
            .collect();
        if !problem.check(&chosen).feasible {
            continue;
        }
        feasible_subsets += 1;
        chosen.sort_unstable();
        let v = eval.evaluate(&DeploymentPattern::unchecked(chosen.iter().copied()))?;
        let better = match &best {
            None => true,
            Some((bv, bc)) => v < *bv || (v == *bv && chosen < *bc),
        };
        if better {
            best = Some((v, chosen));
        }
    }
    let (objective, chosen) = best.ok_or(Error::Infeasible)?;
    Ok(OracleResult {
        optimal: DeploymentPattern::unchecked(chosen),
        objective,
        feasible_subsets,
    })
}

/// Columns: node_id, parent_id, removed_location, chosen_set, objective,
/// feasible, pruned. Sets are written as `;`-separated ids.
pub fn write_search_log<W: Write>(result: &SearchResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "node_id",
        "parent_id",
        "removed_location",
        "chosen_set",
        "objective",
        "feasible",
        "pruned",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for n in &result.nodes {
        let set: Vec<String> = n.chosen.iter().map(u32::to_string).collect();
        w.write_record([
            n.id.to_string(),
            opt(n.parent.map(|p| p.to_string())),
            opt(n.removed.map(|r| r.to_string())),
            set.join(";"),
            n.objective.to_string(),
            n.feasible.to_string(),
            n.pruned.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstraintSpec;
    use crate::optimizer::SyntheticEvaluator;

    fn unit_problem(n: u32, limit: f64) -> Problem {
        let costs: Vec<_> = (1..=n).map(|i| (i, 1.0, 1.0)).collect();
        Problem::new(
            &costs,
            ConstraintSpec {
                influence_limit: limit,
                budget_limit: 1e9,
            },
        )
    }

    #[test]
    fn size_bound_returns_a_largest_feasible_set() {
        let p = unit_problem(5, 2.0);
        let f = SyntheticEvaluator(|l: &DeploymentPattern| 5.0 - l.len() as f64);
        let r = branch_and_bound(&p, &f).unwrap();
        let o = enumerate_oracle(&p, &f).unwrap();
        assert_eq!(r.optimal.len(), 2);
        assert_eq!(r.objective, 3.0);
        assert_eq!(r.objective, o.objective);
        assert!(r.nodes_generated <= 32);
        assert!(r.monotonicity_violations.is_empty());
    }

    #[test]
    fn feasible_root_is_the_answer() {
        let p = unit_problem(4, 10.0);
        let r = branch_and_bound(&p, SyntheticEvaluator(|l: &DeploymentPattern| 4.0 - l.len() as f64)).unwrap();
        assert_eq!(r.optimal.ids().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(r.nodes_generated, 1);
        assert_eq!(r.feasible_nodes, 1);
    }

    #[test]
    fn oracle_matches_hand_enumeration() {
        // f({}) = 10, f({1}) = 4, f({2}) = 6, f({3}) = 5, pairs 3, triple 1;
        // only sets with at most two members are feasible
        let p = unit_problem(3, 2.0);
        let f = SyntheticEvaluator(|l: &DeploymentPattern| match l.len() {
            0 => 10.0,
            1 => [4.0, 6.0, 5.0][l.ids().next().unwrap() as usize - 1],
            2 => 3.0,
            _ => 1.0,
        });
        let o = enumerate_oracle(&p, &f).unwrap();
        assert_eq!(o.feasible_subsets, 7);
        assert_eq!(o.objective, 3.0);
        assert_eq!(o.optimal.ids().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn infeasible_instances_are_reported() {
        let p = Problem::new(
            &[(1, 1.0, 1.0)],
            ConstraintSpec {
                influence_limit: -1.0,
                budget_limit: 0.0,
            },
        );
        let f = SyntheticEvaluator(|_: &DeploymentPattern| 0.0);
        assert!(matches!(branch_and_bound(&p, &f), Err(Error::Infeasible)));
        assert!(matches!(enumerate_oracle(&p, &f), Err(Error::Infeasible)));
    }

    #[test]
    fn oracle_size_guard() {
        let p = unit_problem(21, 100.0);
        let f = SyntheticEvaluator(|_: &DeploymentPattern| 0.0);
        assert!(matches!(enumerate_oracle(&p, &f), Err(Error::TooManyLocations(21))));
    }

    #[test]
    fn zero_limits_give_the_empty_pattern() {
        let p = Problem::new(
            &[(2, 2.5, 12.28), (5, 3.0, 8.23)],
            ConstraintSpec {
                influence_limit: 0.0,
                budget_limit: 0.0,
            },
        );
        let r = branch_and_bound(&p, SyntheticEvaluator(|l: &DeploymentPattern| 2.0 - l.len() as f64)).unwrap();
        assert!(r.optimal.is_empty());
        assert_eq!(r.objective, 2.0);
    }

    #[test]
    fn search_log_has_one_row_per_node() {
        let p = unit_problem(3, 1.0);
        let r = branch_and_bound(&p, SyntheticEvaluator(|l: &DeploymentPattern| 3.0 - l.len() as f64)).unwrap();
        let mut buf = Vec::new();
        write_search_log(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node_id,parent_id,removed_location,chosen_set,objective,feasible,pruned");
        assert_eq!(lines.len(), r.nodes_generated + 1);
        assert_eq!(lines[1], "0,,,1;2;3,0,false,false");
    }

    #[test]
    fn decreasing_child_is_logged() {
        let p = unit_problem(2, 1.0);
        // removing location 1 lowers the objective
        let r = branch_and_bound(
            &p,
            SyntheticEvaluator(|l: &DeploymentPattern| if l.contains_id(1) { 5.0 } else { 1.0 }),
        )
        .unwrap();
        assert!(!r.monotonicity_violations.is_empty());
    }
}
