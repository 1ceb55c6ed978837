//! Deterministic expected-value copy of the line, rolled forward one bus
//! departure at a time.

use crate::error::{Error, Result};
use crate::headway::{headways_into, BusPosition, HeadwayScratch, Regulation};
use crate::metrics::action_cost;
use crate::model::{Leg, Line, SignalPlan, SECONDS_PER_HOUR};
use crate::sim::{BusLocation, Snapshot};

const NO_CHOICE: &[f64] = &[0.0];

/// Expected waiting time at a pre-timed signal for a uniformly distributed
/// arrival instant.
pub fn expected_intersection_delay(plan: &SignalPlan) -> f64 {
    let cycle = plan.cycle_s();
    if cycle <= 0.0 {
        0.0
    } else {
        plan.red_s * plan.red_s / (2.0 * cycle)
    }
}

/// Change in expected traversal time of bus line segment `segment` when its
/// DBL road segments are driven at base speed plus `action`.
pub fn delta_travel_time(line: &Line, segment: usize, action: f64) -> Result<f64> {
    let mut dt = 0.0;
    for &r in &line.segments[segment].roads {
        let road = &line.roads[r];
        if !road.has_dbl {
            continue;
        }
        if road.speed_kmh + action <= 0.0 {
            return Err(Error::InadmissibleAction { action, base: road.speed_kmh });
        }
        dt += SECONDS_PER_HOUR * road.length_km * (1.0 / (road.speed_kmh + action) - 1.0 / road.speed_kmh);
    }
    Ok(dt)
}

/// Dwell estimate for a bus reaching a stop at `arrival_s` when the previous
/// bus got there at `last_s`: the passengers accumulated in between plus those
/// arriving while they board, or the alighting time if that is longer.
/// `rate_per_s * mean_board_s` must stay below 1.
pub fn expected_dwell(arrival_s: f64, last_s: f64, rate_per_s: f64, mean_board_s: f64, alight_s: f64) -> Result<f64> {
    let load = rate_per_s * mean_board_s;
    if load >= 1.0 {
        return Err(Error::UnstableLoad(load));
    }
    let gap = (arrival_s - last_s).max(0.0);
    Ok((gap * load * (1.0 + load)).max(alight_s))
}

/// Expected leg and segment traversal times, signal delays included.
#[derive(Debug, Clone)]
pub struct ExpectedTimes {
    signal_delay_s: Vec<f64>,
    /// Unregulated expected time per bus line segment.
    segment_base_s: Vec<f64>,
}

impl ExpectedTimes {
    pub fn new(line: &Line) -> Self {
        let signal_delay_s: Vec<f64> = line
            .signals
            .iter()
            .map(|s| expected_intersection_delay(&s.plan))
            .collect();
        let segment_base_s = line
            .segments
            .iter()
            .map(|seg| {
                seg.legs
                    .iter()
                    .map(|leg| match *leg {
                        Leg::Cruise { road, share, .. } => line.roads[road].expected_time_s(0.0) * share,
                        Leg::Signal { signal, .. } => signal_delay_s[signal],
                    })
                    .sum()
            })
            .collect();
        Self { signal_delay_s, segment_base_s }
    }

    pub fn signal_delay_s(&self, signal: usize) -> f64 {
        self.signal_delay_s[signal]
    }

    pub fn segment_time_s(&self, line: &Line, segment: usize, action: f64) -> f64 {
        let delta = if action == 0.0 { 0.0 } else { delta_travel_time(line, segment, action).unwrap_or(f64::INFINITY) };
        self.segment_base_s[segment] + delta
    }

    pub fn leg_time_s(&self, line: &Line, segment: usize, leg: usize, action: f64) -> f64 {
        match line.segments[segment].legs[leg] {
            Leg::Cruise { road, share, .. } => line.roads[road].expected_time_s(action) * share,
            Leg::Signal { signal, .. } => self.signal_delay_s[signal],
        }
    }
}

fn leg_span(leg: &Leg) -> (f64, f64) {
    match *leg {
        Leg::Cruise { km0, km1, .. } => (km0, km1),
        Leg::Signal { km, .. } => (km, km),
    }
}

/// An expected traversal of one bus line segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traverse {
    pub segment: usize,
    pub action: f64,
    /// When the traversal (re)starts, relative to the decision instant.
    pub start_s: f64,
    /// Leg the bus is on at `start_s`.
    pub first_leg: usize,
    /// Expected time left on that leg at `start_s`.
    pub first_leg_s: f64,
    /// Distance from the segment start at `start_s`.
    pub start_km: f64,
}

/// Rollout state of one bus. Times are relative to the decision instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutBus {
    /// Stop the bus is heading for or dwelling at.
    pub target: usize,
    /// Arrival at `target`; not positive for a bus already there.
    pub arrival_s: f64,
    /// Departure from `target`.
    pub activation_s: f64,
    /// The traversal leading to `target`, if the bus is not there yet.
    pub traverse: Option<Traverse>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutState {
    pub buses: Vec<RolloutBus>,
    /// Per stop: latest (expected) bus arrival.
    pub latest_arrival_s: Vec<f64>,
    /// Per bus, per stop: alighting time of the passengers on board.
    pub alight_s: Vec<Vec<f64>>,
    /// Time left in the observation period.
    pub horizon_s: f64,
    /// The bus whose departure triggered the decision.
    pub decider: usize,
}

/// Saved fields of one in-place step.
#[derive(Debug, Clone, Copy)]
struct Undo {
    bus: usize,
    old: RolloutBus,
    stop: usize,
    old_latest: f64,
}

/// The static ingredients of a rollout.
#[derive(Debug, Clone, Copy)]
pub struct Rollout<'a> {
    pub line: &'a Line,
    pub controlled: &'a [bool],
    pub expected: &'a ExpectedTimes,
    pub mean_board_s: f64,
}

#[derive(Debug, Default)]
struct Scratch {
    positions: Vec<BusPosition>,
    headways: Vec<f64>,
    headway: HeadwayScratch,
}

impl<'a> Rollout<'a> {
    /// State at a decision instant. Dwelling buses target their current stop
    /// and keep their known departure time; cruising buses target the next
    /// stop, and their expected arrivals are processed in time order so that
    /// each dwell estimate sees the latest arrival before it.
    pub fn build_state(&self, snapshot: &Snapshot<'_>) -> Result<RolloutState> {
        let line = self.line;
        let now = snapshot.now_s;
        let mut latest: Vec<f64> = snapshot.stop_last_arrival_s.iter().map(|t| t - now).collect();
        let mut buses = Vec::with_capacity(snapshot.buses.len());
        let mut cruising = Vec::new();
        for (b, view) in snapshot.buses.iter().enumerate() {
            match view.location {
                BusLocation::AtStop { stop, arrival_s, departure_s } => buses.push(RolloutBus {
                    target: stop,
                    arrival_s: arrival_s - now,
                    activation_s: if b == snapshot.bus { 0.0 } else { (departure_s - now).max(0.0) },
                    traverse: None,
                }),
                BusLocation::Cruising { segment, action, leg, km, leg_end_s } => {
                    let seg = &line.segments[segment];
                    let first_leg_s = match seg.legs[leg] {
                        Leg::Signal { .. } => (leg_end_s - now).max(0.0),
                        Leg::Cruise { km0, km1, .. } => {
                            let full = self.expected.leg_time_s(line, segment, leg, action);
                            if km1 > km0 {
                                full * ((km1 - km).max(0.0) / (km1 - km0))
                            } else {
                                0.0
                            }
                        }
                    };
                    let rest: f64 = (leg + 1..seg.legs.len())
                        .map(|k| self.expected.leg_time_s(line, segment, k, action))
                        .sum();
                    buses.push(RolloutBus {
                        target: seg.to_stop,
                        arrival_s: first_leg_s + rest,
                        activation_s: f64::NAN,
                        traverse: Some(Traverse {
                            segment,
                            action,
                            start_s: 0.0,
                            first_leg: leg,
                            first_leg_s,
                            start_km: km,
                        }),
                    });
                    cruising.push(b);
                }
            }
        }
        cruising.sort_by(|&a, &b| buses[a].arrival_s.total_cmp(&buses[b].arrival_s).then(a.cmp(&b)));
        for b in cruising {
            let bus = &mut buses[b];
            let e = bus.target;
            let dwell = expected_dwell(
                bus.arrival_s,
                latest[e],
                line.stops[e].rate_per_s,
                self.mean_board_s,
                snapshot.buses[b].alight_s_by_stop[e],
            )?;
            bus.activation_s = bus.arrival_s + dwell;
            latest[e] = bus.arrival_s;
        }
        Ok(RolloutState {
            buses,
            latest_arrival_s: latest,
            alight_s: snapshot.buses.iter().map(|v| v.alight_s_by_stop.clone()).collect(),
            horizon_s: line.horizon_s - now,
            decider: snapshot.bus,
        })
    }

    /// The bus activated next: earliest departure, lowest index on ties.
    pub fn next_bus(&self, state: &RolloutState) -> usize {
        let mut best = 0;
        for (b, bus) in state.buses.iter().enumerate().skip(1) {
            if bus.activation_s < state.buses[best].activation_s {
                best = b;
            }
        }
        best
    }

    /// Actions available to `bus` on leaving its target stop; `[0]` when the
    /// segment there has no controllable lane.
    pub fn actions(&self, state: &RolloutState, bus: usize) -> &'a [f64] {
        let g = state.buses[bus].target;
        let seg = &self.line.segments[g];
        if self.controlled[g] && seg.actions.len() > 1 {
            &seg.actions
        } else {
            NO_CHOICE
        }
    }

    fn advance(&self, state: &RolloutState, bus: usize, action: f64) -> Result<(RolloutBus, usize)> {
        let line = self.line;
        let current = state.buses[bus];
        let tau = current.activation_s;
        let g = current.target;
        let next = line.segments[g].to_stop;
        let arrival = tau + self.expected.segment_time_s(line, g, action);
        let dwell = expected_dwell(
            arrival,
            state.latest_arrival_s[next],
            line.stops[next].rate_per_s,
            self.mean_board_s,
            state.alight_s[bus][next],
        )?;
        let moved = RolloutBus {
            target: next,
            arrival_s: arrival,
            activation_s: arrival + dwell,
            traverse: Some(Traverse {
                segment: g,
                action,
                start_s: tau,
                first_leg: 0,
                first_leg_s: self.expected.leg_time_s(line, g, 0, action),
                start_km: 0.0,
            }),
        };
        Ok((moved, next))
    }

    /// Activates `bus` with `action`: it leaves its target stop now, drives
    /// the segment in expected time and dwells for the estimated time at the
    /// next stop, whose latest arrival becomes the bus's arrival.
    pub fn step(&self, state: &RolloutState, bus: usize, action: f64) -> Result<RolloutState> {
        let (moved, next) = self.advance(state, bus, action)?;
        let mut out = state.clone();
        out.latest_arrival_s[next] = moved.arrival_s;
        out.buses[bus] = moved;
        Ok(out)
    }

    fn apply(&self, state: &mut RolloutState, bus: usize, action: f64) -> Result<Undo> {
        let (moved, next) = self.advance(state, bus, action)?;
        let undo = Undo {
            bus,
            old: state.buses[bus],
            stop: next,
            old_latest: state.latest_arrival_s[next],
        };
        state.latest_arrival_s[next] = moved.arrival_s;
        state.buses[bus] = moved;
        Ok(undo)
    }

    fn undo(state: &mut RolloutState, undo: Undo) {
        state.buses[undo.bus] = undo.old;
        state.latest_arrival_s[undo.stop] = undo.old_latest;
    }

    pub fn position(&self, bus: &RolloutBus, at_s: f64) -> BusPosition {
        let line = self.line;
        let tr = match bus.traverse {
            Some(tr) if at_s < bus.arrival_s => tr,
            _ => return BusPosition::at(line.stop_offset(bus.target)),
        };
        let seg = &line.segments[tr.segment];
        let mut t = tr.start_s;
        let mut km = tr.start_km;
        for k in tr.first_leg..seg.legs.len() {
            let (km0, km1) = leg_span(&seg.legs[k]);
            let (from, dur) = if k == tr.first_leg {
                (tr.start_km, tr.first_leg_s)
            } else {
                (km0, self.expected.leg_time_s(line, tr.segment, k, tr.action))
            };
            if at_s < t + dur {
                let f = ((at_s - t) / dur).clamp(0.0, 1.0);
                km = from + f * (km1 - from);
                break;
            }
            t += dur;
            km = km1;
        }
        BusPosition {
            offset_km: line.wrap(seg.start_km + km),
            regulation: (tr.action != 0.0).then_some(Regulation { segment: tr.segment, action: tr.action }),
        }
    }

    pub fn positions(&self, state: &RolloutState, at_s: f64) -> Vec<BusPosition> {
        state.buses.iter().map(|b| self.position(b, at_s)).collect()
    }

    /// Action cost on the rollout headways at `at_s`.
    pub fn cost(&self, state: &RolloutState, at_s: f64) -> Result<f64> {
        self.cost_with(state, at_s, &mut Scratch::default())
    }

    fn cost_with(&self, state: &RolloutState, at_s: f64, scratch: &mut Scratch) -> Result<f64> {
        scratch.positions.clear();
        scratch
            .positions
            .extend(state.buses.iter().map(|b| self.position(b, at_s)));
        headways_into(self.line, &scratch.positions, &mut scratch.headway, &mut scratch.headways);
        action_cost(&scratch.headways)
    }

    /// Depth-`depth` look-ahead: the decider's action minimizing its own cost
    /// plus `gamma` times the best discounted cost of the following
    /// activations. Depth shrinks when the next activation falls beyond the
    /// observation period. Ties go to the first action in the set.
    pub fn select_action(&self, state: &RolloutState, depth: usize, gamma: f64) -> Result<f64> {
        let mut work = state.clone();
        let mut scratch = Scratch::default();
        let bus = state.decider;
        let tau = state.buses[bus].activation_s;
        let mut best = f64::MAX;
        let mut choice = None;
        for &a in self.actions(state, bus) {
            let undo = self.apply(&mut work, bus, a)?;
            let c = self.cost_with(&work, tau, &mut scratch)?;
            let v = c + gamma * self.descend(&mut work, 2, depth, gamma, &mut scratch)?;
            Self::undo(&mut work, undo);
            if v < best {
                best = v;
                choice = Some(a);
            }
        }
        choice.ok_or_else(|| Error::Controller {
            time: 0.0,
            bus: self.line.buses[bus].id,
            reason: "no action scored below the initial bound".into(),
        })
    }

    fn descend(&self, work: &mut RolloutState, level: usize, depth: usize, gamma: f64, scratch: &mut Scratch) -> Result<f64> {
        if level > depth {
            return Ok(0.0);
        }
        let bus = self.next_bus(work);
        let tau = work.buses[bus].activation_s;
        if tau > work.horizon_s {
            return Ok(0.0);
        }
        let mut best = f64::MAX;
        for &a in self.actions(work, bus) {
            let undo = self.apply(work, bus, a)?;
            let c = self.cost_with(work, tau, scratch)?;
            let v = c + gamma * self.descend(work, level + 1, depth, gamma, scratch)?;
            Self::undo(work, undo);
            if v < best {
                best = v;
            }
        }
        Ok(best)
    }
}
