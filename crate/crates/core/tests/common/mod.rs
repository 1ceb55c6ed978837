#![allow(dead_code)]

use dbl_core::controller::{LookaheadController, Rollout, RolloutState};
use dbl_core::reference::toy_config;
use dbl_core::{DeploymentPattern, Line};
use rand::seq::IndexedRandom;
use rand::Rng;

/// A small random line, a lane mask and a rollout state on it. Buses start
/// dwelling at random stops; a few random steps then put some of them on the
/// road.
pub struct ToyCase {
    pub line: Line,
    pub controlled: Vec<bool>,
    pub state: RolloutState,
}

pub fn random_case<R: Rng>(rng: &mut R, max_buses: usize) -> ToyCase {
    let n_stops = rng.random_range(3..=6usize);
    let n_buses = rng.random_range(2..=max_buses);
    let mut dbl: Vec<u32> = (1..=n_stops as u32).filter(|_| rng.random_bool(0.6)).collect();
    if dbl.is_empty() {
        dbl.push(rng.random_range(1..=n_stops as u32));
    }
    let rate = rng.random_range(0.5..6.0);
    let line = Line::new(toy_config(n_stops, n_buses, &dbl, rate)).unwrap();
    let lanes: Vec<u32> = dbl.iter().copied().filter(|_| rng.random_bool(0.8)).collect();
    let controlled = DeploymentPattern::new(&line, lanes).unwrap().mask(&line);

    let decider = rng.random_range(0..n_buses);
    let buses = (0..n_buses)
        .map(|b| {
            let arrival_s = -rng.random_range(0.0..60.0);
            dbl_core::controller::RolloutBus {
                target: rng.random_range(0..n_stops),
                arrival_s,
                activation_s: if b == decider { 0.0 } else { rng.random_range(0.0..240.0) },
                traverse: None,
            }
        })
        .collect();
    let mut state = RolloutState {
        buses,
        latest_arrival_s: (0..n_stops).map(|_| -rng.random_range(0.0..400.0)).collect(),
        alight_s: (0..n_buses)
            .map(|_| (0..n_stops).map(|_| rng.random_range(0.0..12.0)).collect())
            .collect(),
        horizon_s: if rng.random_bool(0.25) { rng.random_range(0.0..300.0) } else { 3600.0 },
        decider,
    };

    let ctl = LookaheadController::new(&line, 1, 1.0).unwrap();
    let rollout = ctl.rollout(&line, &controlled);
    for _ in 0..rng.random_range(0..=3) {
        let b = rng.random_range(0..n_buses);
        if b == decider || state.buses[b].traverse.is_some() {
            continue;
        }
        let a = *rollout.actions(&state, b).choose(rng).unwrap();
        state = rollout.step(&state, b, a).unwrap();
    }
    ToyCase { line, controlled, state }
}

fn earliest(state: &RolloutState) -> usize {
    (0..state.buses.len())
        .min_by(|&a, &b| {
            state.buses[a]
                .activation_s
                .total_cmp(&state.buses[b].activation_s)
                .then(a.cmp(&b))
        })
        .unwrap()
}

/// Every action sequence of the look-ahead tree with the per-level costs
/// along it.
fn leaves(rollout: &Rollout<'_>, state: &RolloutState, level: usize, depth: usize, prefix: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
    if level > depth {
        out.push(prefix.clone());
        return;
    }
    let bus = if level == 1 { state.decider } else { earliest(state) };
    let tau = state.buses[bus].activation_s;
    if level > 1 && tau > state.horizon_s {
        out.push(prefix.clone());
        return;
    }
    for &a in rollout.actions(state, bus) {
        let next = rollout.step(state, bus, a).unwrap();
        let c = rollout.cost(&next, tau).unwrap();
        prefix.push(if level == 1 { a } else { f64::NAN });
        prefix.push(c);
        leaves(rollout, &next, level + 1, depth, prefix, out);
        prefix.truncate(prefix.len() - 2);
    }
}

/// Exhaustive reference for the look-ahead decision: score each leaf by its
/// discounted cost path, keep the best leaf per first action and return the
/// first action with the strictly lowest score.
pub fn oracle_action(rollout: &Rollout<'_>, state: &RolloutState, depth: usize, gamma: f64) -> f64 {
    let mut all = Vec::new();
    leaves(rollout, state, 1, depth, &mut Vec::new(), &mut all);
    let first_actions = rollout.actions(state, state.decider);
    let mut best = (f64::INFINITY, f64::NAN);
    for &a in first_actions {
        let score = all
            .iter()
            .filter(|path| path[0] == a)
            .map(|path| {
                let costs: Vec<f64> = path.iter().skip(1).step_by(2).copied().collect();
                costs.iter().rev().fold(0.0, |acc, c| c + gamma * acc)
            })
            .fold(f64::INFINITY, f64::min);
        if score < best.0 {
            best = (score, a);
        }
    }
    best.1
}
