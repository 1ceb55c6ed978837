//! Choosing where to build controllable lanes: objective evaluation and the
//! branch-and-bound search over deployment patterns.

mod search;

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rayon::prelude::*;

pub use search::{branch_and_bound, enumerate_oracle, write_search_log, OracleResult, SearchNode, SearchResult};

use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::metrics::{fsi, stability_report, StabilityReport};
use crate::model::{ConstraintCheck, ConstraintSpec, DeploymentPattern, Line, CONSTRAINT_TOLERANCE};
use crate::sim::{run_simulation_with, ReplicationSeed, SimOptions, SimOutcome};

/// Maps a deployment pattern to an objective to be minimized.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, pattern: &DeploymentPattern) -> Result<f64>;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, pattern: &DeploymentPattern) -> Result<f64> {
        (**self).evaluate(pattern)
    }
}

/// An objective given by a plain function.
pub struct SyntheticEvaluator<F>(pub F);

impl<F> Evaluator for SyntheticEvaluator<F>
where
    F: Fn(&DeploymentPattern) -> f64 + Send + Sync,
{
    fn evaluate(&self, pattern: &DeploymentPattern) -> Result<f64> {
        Ok((self.0)(pattern))
    }
}

/// Caches another evaluator's results per pattern.
pub struct Memoized<E> {
    inner: E,
    cache: Mutex<HashMap<DeploymentPattern, f64>>,
}

impl<E: Evaluator> Memoized<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Number of distinct patterns evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

impl<E: Evaluator> Evaluator for Memoized<E> {
    fn evaluate(&self, pattern: &DeploymentPattern) -> Result<f64> {
        if let Some(v) = self.cache.lock().unwrap().get(pattern) {
            return Ok(*v);
        }
        let v = self.inner.evaluate(pattern)?;
        self.cache.lock().unwrap().insert(pattern.clone(), v);
        Ok(v)
    }
}

/// Evaluates a pattern through a caching evaluator.
pub fn evaluate_pattern<E: Evaluator>(evaluator: &Memoized<E>, pattern: &DeploymentPattern) -> Result<f64> {
    evaluator.evaluate(pattern)
}

/// Runs `reps` replications of a pattern in parallel and maps each outcome
/// through `f`. Results come back in replication order.
pub fn replicate<T, F>(
    line: &Line,
    pattern: &DeploymentPattern,
    controller: &dyn Controller,
    seeds: &[ReplicationSeed],
    options: &SimOptions,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(SimOutcome) -> Result<T> + Send + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            run_simulation_with(line, pattern, controller, seed, options)
                .and_then(&f)
                .map_err(|e| Error::Replication {
                    replication: seed.replication,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Mean stability index over simulated replications. With common random
/// numbers, replication `j` of every pattern uses seed `(base_seed, j)`;
/// otherwise the base seed is mixed with the pattern so that patterns see
/// independent randomness.
pub struct MonteCarloEvaluator<'a> {
    pub line: &'a Line,
    pub controller: &'a dyn Controller,
    pub reps: u64,
    pub base_seed: u64,
    pub common_random_numbers: bool,
    pub options: SimOptions,
}

impl MonteCarloEvaluator<'_> {
    pub fn seeds(&self, pattern: &DeploymentPattern) -> Vec<ReplicationSeed> {
        let base = if self.common_random_numbers {
            self.base_seed
        } else {
            self.base_seed ^ pattern_fingerprint(pattern)
        };
        (0..self.reps).map(|j| ReplicationSeed::new(base, j)).collect()
    }

    pub fn reports(&self, pattern: &DeploymentPattern) -> Result<Vec<StabilityReport>> {
        replicate(
            self.line,
            pattern,
            self.controller,
            &self.seeds(pattern),
            &self.options,
            |out| stability_report(&out),
        )
    }
}

impl Evaluator for MonteCarloEvaluator<'_> {
    fn evaluate(&self, pattern: &DeploymentPattern) -> Result<f64> {
        let values: Vec<f64> = self.reports(pattern)?.iter().map(|r| r.fsi).collect();
        fsi(&values)
    }
}

/// FNV-1a over the chosen ids.
fn pattern_fingerprint(pattern: &DeploymentPattern) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for id in pattern.ids() {
        for b in id.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Candidate locations with their influence and money costs, and the limits
/// on both sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    /// Candidate ids in branching order.
    pub candidates: Vec<u32>,
    pub costs: BTreeMap<u32, (f64, f64)>,
    pub limits: ConstraintSpec,
}

impl Problem {
    pub fn new(costs: &[(u32, f64, f64)], limits: ConstraintSpec) -> Self {
        Self {
            candidates: costs.iter().map(|c| c.0).collect(),
            costs: costs.iter().map(|&(id, f1, f2)| (id, (f1, f2))).collect(),
            limits,
        }
    }

    /// Candidates taken from a line; each must be eligible and carry both
    /// costs.
    pub fn from_line(line: &Line, candidates: &[u32], limits: ConstraintSpec) -> Result<Self> {
        let mut costs = Vec::with_capacity(candidates.len());
        for &id in candidates {
            let seg = &line.segments[line.segment_index(id)?];
            if !seg.eligible {
                return Err(Error::NotEligible(id));
            }
            match (seg.influence_cost, seg.money_cost) {
                (Some(f1), Some(f2)) => costs.push((id, f1, f2)),
                _ => return Err(Error::MissingCost(id)),
            }
        }
        Ok(Self::new(&costs, limits))
    }

    pub fn check(&self, chosen: &[u32]) -> ConstraintCheck {
        let (influence_sum, money_sum) = chosen
            .iter()
            .map(|id| self.costs[id])
            .fold((0.0, 0.0), |(a, b), (f1, f2)| (a + f1, b + f2));
        ConstraintCheck {
            feasible: influence_sum <= self.limits.influence_limit + CONSTRAINT_TOLERANCE
                && money_sum <= self.limits.budget_limit + CONSTRAINT_TOLERANCE,
            influence_sum,
            money_sum,
        }
    }
}

/// Expected wall time of a search: nodes times replications times the time of
/// one simulation.
pub fn search_time_estimate(nodes: usize, reps: u64, sim_seconds: f64) -> f64 {
    nodes as f64 * reps as f64 * sim_seconds
}
