//! Discrete-event simulation of the circular line.

mod bunching;
mod dwell;
mod export;
mod seed;
mod travel;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bunching::{detect_bunching, BunchingDetector, BunchingRule, PositionSample};
pub use dwell::{
    execute_dwell, ArrivalFeed, DwellOutcome, NoArrivals, Onboard, PoissonSource, StopQueue,
    WaitingPassenger,
};
pub use export::{write_ctps_csv, write_trajectories_csv};
pub use seed::ReplicationSeed;
pub use travel::{sample_travel_time, signal_delay, MIN_TRAVEL_FRACTION};

use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::headway::{headways_into, BusPosition, HeadwayScratch, Regulation};
use crate::metrics::sigma_h;
use crate::model::{DeploymentPattern, Leg, Line};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Spacing between the position samples used for bunching detection.
    pub sample_interval_s: f64,
    pub bunching: BunchingRule,
    /// Keep the position samples in the outcome.
    pub keep_samples: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            sample_interval_s: 10.0,
            bunching: BunchingRule::default(),
            keep_samples: false,
        }
    }
}

/// Headways of every bus at one bus departure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtpRecord {
    pub time_s: f64,
    /// Index of the departing bus.
    pub bus: usize,
    pub headways: Vec<f64>,
    pub action: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub stop: usize,
    pub arrival_s: f64,
    pub departure_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletedTrip {
    pub wait_s: f64,
    pub ride_s: f64,
}

/// A nonzero regulating speed applied to one traversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub time_s: f64,
    pub bus: usize,
    pub segment: usize,
    pub action: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassengerCounts {
    pub generated: usize,
    pub completed: usize,
    pub onboard_at_end: usize,
    pub waiting_at_end: usize,
    /// Sum over dwells of passengers left behind by a full bus.
    pub denials: usize,
    pub max_load: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub ctp_records: Vec<CtpRecord>,
    pub trajectories: Vec<Vec<TrajectoryPoint>>,
    pub completed_trips: Vec<CompletedTrip>,
    pub action_log: Vec<ActionRecord>,
    /// Departures at which the controller was consulted.
    pub decisions: usize,
    pub bunched: bool,
    pub passengers: PassengerCounts,
    pub samples: Vec<PositionSample>,
}

impl SimOutcome {
    pub fn sigma_series(&self) -> Result<Vec<f64>> {
        self.ctp_records.iter().map(|r| sigma_h(&r.headways)).collect()
    }
}

/// Where a bus is when the controller is consulted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BusLocation {
    AtStop {
        stop: usize,
        arrival_s: f64,
        departure_s: f64,
    },
    Cruising {
        segment: usize,
        action: f64,
        /// Index into the segment's legs.
        leg: usize,
        /// Distance travelled from the segment start.
        km: f64,
        /// When the current leg ends. For a signal leg this is the end of the
        /// wait at the stop line.
        leg_end_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusView {
    pub location: BusLocation,
    /// Total alighting time of the passengers on board, by destination stop.
    pub alight_s_by_stop: Vec<f64>,
}

/// Everything a controller may observe at a decision instant.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub line: &'a Line,
    /// Per bus line segment: is a controllable DBL deployed there.
    pub controlled: &'a [bool],
    pub now_s: f64,
    /// The departing bus; it is `AtStop` with `departure_s == now_s`.
    pub bus: usize,
    pub buses: &'a [BusView],
    pub stop_last_arrival_s: &'a [f64],
    pub stop_last_departure_s: &'a [f64],
}

impl Snapshot<'_> {
    /// Ring positions of all buses at `now_s`.
    pub fn positions(&self) -> Vec<BusPosition> {
        self.buses
            .iter()
            .map(|v| match v.location {
                BusLocation::AtStop { stop, .. } => BusPosition::at(self.line.stop_offset(stop)),
                BusLocation::Cruising { segment, action, km, .. } => {
                    cruise_position(self.line, segment, action, km)
                }
            })
            .collect()
    }
}

fn cruise_position(line: &Line, segment: usize, action: f64, km: f64) -> BusPosition {
    BusPosition {
        offset_km: line.wrap(line.segments[segment].start_km + km),
        regulation: (action != 0.0).then_some(Regulation { segment, action }),
    }
}

#[derive(Debug, Clone, Copy)]
struct LegTiming {
    t0: f64,
    t1: f64,
    km0: f64,
    km1: f64,
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Dwelling {
        stop: usize,
        arrival_s: f64,
        departure_s: f64,
    },
    Cruising {
        segment: usize,
        action: f64,
    },
}

struct Bus {
    capacity: usize,
    onboard: Vec<Onboard>,
    phase: Phase,
    legs: Vec<LegTiming>,
    rng: ChaCha8Rng,
}

impl Bus {
    /// Current leg index and distance along the segment at time `t`.
    fn cruise_state(&self, t: f64) -> (usize, f64) {
        for (k, leg) in self.legs.iter().enumerate() {
            if t < leg.t1 {
                if t <= leg.t0 || leg.t1 <= leg.t0 {
                    return (k, leg.km0);
                }
                let f = (t - leg.t0) / (leg.t1 - leg.t0);
                return (k, leg.km0 + f * (leg.km1 - leg.km0));
            }
        }
        let last = self.legs.len() - 1;
        (last, self.legs[last].km1)
    }

    fn position(&self, line: &Line, t: f64) -> BusPosition {
        match self.phase {
            Phase::Dwelling { stop, .. } => BusPosition::at(line.stop_offset(stop)),
            Phase::Cruising { segment, action } => {
                cruise_position(line, segment, action, self.cruise_state(t).1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    bus: usize,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.bus.cmp(&other.bus))
            .then(self.seq.cmp(&other.seq))
    }
}

pub fn run_simulation(
    line: &Line,
    pattern: &DeploymentPattern,
    controller: &dyn Controller,
    seed: ReplicationSeed,
) -> Result<SimOutcome> {
    run_simulation_with(line, pattern, controller, seed, &SimOptions::default())
}

/// Runs the line over `[0, horizon]`. Passengers arrive as a Poisson stream
/// per stop; buses alternate between dwelling and traversing bus line
/// segments. At every departure onto a segment of `pattern` with a real
/// choice of actions the controller picks the regulating speed for that
/// traversal. Headways are recorded at every departure.
pub fn run_simulation_with(
    line: &Line,
    pattern: &DeploymentPattern,
    controller: &dyn Controller,
    seed: ReplicationSeed,
    options: &SimOptions,
) -> Result<SimOutcome> {
    Engine::new(line, pattern, controller, seed, options).run()
}

struct Engine<'a> {
    line: &'a Line,
    controlled: Vec<bool>,
    controller: &'a dyn Controller,
    options: SimOptions,
    buses: Vec<Bus>,
    queues: Vec<StopQueue>,
    sources: Vec<PoissonSource>,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    stop_last_arrival: Vec<f64>,
    stop_last_departure: Vec<f64>,
    views: Vec<BusView>,
    positions: Vec<BusPosition>,
    headways: Vec<f64>,
    scratch: HeadwayScratch,
    detector: BunchingDetector,
    next_sample_s: f64,
    out: SimOutcome,
}

impl<'a> Engine<'a> {
    fn new(
        line: &'a Line,
        pattern: &DeploymentPattern,
        controller: &'a dyn Controller,
        seed: ReplicationSeed,
        options: &SimOptions,
    ) -> Self {
        let n_stops = line.n_stops();
        let n_buses = line.n_buses();
        let sources = line
            .stops
            .iter()
            .enumerate()
            .map(|(e, s)| PoissonSource::new(e, s, n_stops, &line.profiles, seed.stop_stream(e)))
            .collect();
        let mut buses = Vec::with_capacity(n_buses);
        let mut trajectories = Vec::with_capacity(n_buses);
        let mut events = BinaryHeap::new();
        for (b, spec) in line.buses.iter().enumerate() {
            let stop = spec.initial_stop as usize - 1;
            let departure_s = spec.initial_activation_delay_s;
            buses.push(Bus {
                capacity: spec.capacity as usize,
                onboard: Vec::new(),
                phase: Phase::Dwelling { stop, arrival_s: 0.0, departure_s },
                legs: Vec::new(),
                rng: seed.bus_stream(b),
            });
            trajectories.push(vec![TrajectoryPoint { stop, arrival_s: 0.0, departure_s }]);
            events.push(Reverse(Event {
                time: departure_s,
                kind: EventKind::Departure,
                bus: b,
                seq: b as u64,
            }));
        }
        Self {
            line,
            controlled: pattern.mask(line),
            controller,
            options: *options,
            buses,
            queues: (0..n_stops).map(StopQueue::new).collect(),
            sources,
            events,
            seq: n_buses as u64,
            stop_last_arrival: vec![0.0; n_stops],
            stop_last_departure: vec![0.0; n_stops],
            views: Vec::with_capacity(n_buses),
            positions: Vec::with_capacity(n_buses),
            headways: Vec::with_capacity(n_buses),
            scratch: HeadwayScratch::default(),
            detector: BunchingDetector::new(options.bunching, line.ring_km),
            next_sample_s: 0.0,
            out: SimOutcome {
                ctp_records: Vec::new(),
                trajectories,
                completed_trips: Vec::new(),
                action_log: Vec::new(),
                decisions: 0,
                bunched: false,
                passengers: PassengerCounts::default(),
                samples: Vec::new(),
            },
        }
    }

    fn run(mut self) -> Result<SimOutcome> {
        let horizon = self.line.horizon_s;
        while let Some(Reverse(ev)) = self.events.pop() {
            if ev.time > horizon {
                break;
            }
            self.sample_until(ev.time);
            match ev.kind {
                EventKind::Departure => self.depart(ev.bus, ev.time)?,
                EventKind::Arrival => self.arrive(ev.bus, ev.time),
            }
        }
        self.sample_until(horizon);
        self.finish(horizon)
    }

    fn schedule(&mut self, time: f64, kind: EventKind, bus: usize) {
        self.seq += 1;
        self.events.push(Reverse(Event { time, kind, bus, seq: self.seq }));
    }

    fn sample_until(&mut self, t: f64) {
        let step = self.options.sample_interval_s;
        if step <= 0.0 {
            return;
        }
        while self.next_sample_s <= t {
            let at = self.next_sample_s;
            self.fill_positions(at);
            let offsets: Vec<f64> = self.positions.iter().map(|p| p.offset_km).collect();
            self.detector.observe(at, &offsets);
            if self.options.keep_samples {
                self.out.samples.push(PositionSample { time_s: at, offsets_km: offsets });
            }
            self.next_sample_s += step;
        }
    }

    fn fill_positions(&mut self, t: f64) {
        self.positions.clear();
        let line = self.line;
        self.positions.extend(self.buses.iter().map(|b| b.position(line, t)));
    }

    fn fill_views(&mut self, t: f64) {
        let n_stops = self.line.n_stops();
        let profiles = &self.line.profiles;
        self.views.clear();
        for bus in &self.buses {
            let mut alight = vec![0.0; n_stops];
            for p in &bus.onboard {
                alight[p.destination] += profiles[p.profile].alight_s;
            }
            let location = match bus.phase {
                Phase::Dwelling { stop, arrival_s, departure_s } => {
                    BusLocation::AtStop { stop, arrival_s, departure_s }
                }
                Phase::Cruising { segment, action } => {
                    let (leg, km) = bus.cruise_state(t);
                    BusLocation::Cruising { segment, action, leg, km, leg_end_s: bus.legs[leg].t1 }
                }
            };
            self.views.push(BusView { location, alight_s_by_stop: alight });
        }
    }

    fn depart(&mut self, b: usize, t: f64) -> Result<()> {
        let line = self.line;
        let Phase::Dwelling { stop, .. } = self.buses[b].phase else {
            return Err(Error::Controller {
                time: t,
                bus: line.buses[b].id,
                reason: "departure scheduled for a bus that is not at a stop".into(),
            });
        };
        let g = stop;
        let seg = &line.segments[g];

        let mut action = 0.0;
        if self.controlled[g] && seg.actions.len() > 1 {
            self.out.decisions += 1;
            self.fill_views(t);
            let snapshot = Snapshot {
                line,
                controlled: &self.controlled,
                now_s: t,
                bus: b,
                buses: &self.views,
                stop_last_arrival_s: &self.stop_last_arrival,
                stop_last_departure_s: &self.stop_last_departure,
            };
            action = self.controller.decide(&snapshot)?;
            if !seg.actions.contains(&action) {
                return Err(Error::Controller {
                    time: t,
                    bus: line.buses[b].id,
                    reason: format!("action {action} is not in the action set of segment {}", seg.id),
                });
            }
            if action != 0.0 {
                self.out.action_log.push(ActionRecord { time_s: t, bus: b, segment: g, action });
            }
        }
        self.queues[stop].last_departure_s = t;
        self.stop_last_departure[stop] = t;

        let bus = &mut self.buses[b];
        bus.legs.clear();
        let mut clock = t;
        let mut road_time: Option<(usize, f64)> = None;
        for leg in &seg.legs {
            match *leg {
                Leg::Cruise { road, km0, km1, share } => {
                    let full = match road_time {
                        Some((r, s)) if r == road => s,
                        _ => {
                            let s = sample_travel_time(&line.roads[road], action, &mut bus.rng);
                            road_time = Some((road, s));
                            s
                        }
                    };
                    let dt = full * share;
                    bus.legs.push(LegTiming { t0: clock, t1: clock + dt, km0, km1 });
                    clock += dt;
                }
                Leg::Signal { signal, km } => {
                    let wait = signal_delay(&line.signals[signal].plan, clock);
                    bus.legs.push(LegTiming { t0: clock, t1: clock + wait, km0: km, km1: km });
                    clock += wait;
                }
            }
        }
        bus.phase = Phase::Cruising { segment: g, action };
        self.schedule(clock, EventKind::Arrival, b);

        self.fill_positions(t);
        headways_into(line, &self.positions, &mut self.scratch, &mut self.headways);
        self.out.ctp_records.push(CtpRecord {
            time_s: t,
            bus: b,
            headways: self.headways.clone(),
            action,
        });
        Ok(())
    }

    fn arrive(&mut self, b: usize, t: f64) {
        let line = self.line;
        let Phase::Cruising { segment, .. } = self.buses[b].phase else {
            unreachable!("arrival scheduled for a dwelling bus")
        };
        let stop = line.segments[segment].to_stop;
        let bus = &mut self.buses[b];
        let dwell = execute_dwell(
            &mut bus.onboard,
            bus.capacity,
            &mut self.queues[stop],
            &mut self.sources[stop],
            &line.profiles,
            t,
        );
        let counts = &mut self.out.passengers;
        counts.denials += dwell.denied;
        counts.max_load = counts.max_load.max(bus.onboard.len());
        self.out
            .completed_trips
            .extend(dwell.alighted.iter().map(|p| CompletedTrip {
                wait_s: p.boarded_at_s - p.origin_arrival_s,
                ride_s: t - p.boarded_at_s,
            }));
        bus.phase = Phase::Dwelling { stop, arrival_s: t, departure_s: dwell.departure_s };
        self.queues[stop].last_arrival_s = t;
        self.stop_last_arrival[stop] = t;
        self.out.trajectories[b].push(TrajectoryPoint {
            stop,
            arrival_s: t,
            departure_s: dwell.departure_s,
        });
        self.schedule(dwell.departure_s, EventKind::Departure, b);
    }

    fn finish(mut self, horizon: f64) -> Result<SimOutcome> {
        for (source, queue) in self.sources.iter_mut().zip(&mut self.queues) {
            source.pull_until(horizon, queue);
        }
        let counts = &mut self.out.passengers;
        counts.generated = self.sources.iter().map(|s| s.generated()).sum();
        counts.completed = self.out.completed_trips.len();
        counts.onboard_at_end = self.buses.iter().map(|b| b.onboard.len()).sum();
        counts.waiting_at_end = self.queues.iter().map(|q| q.waiting.len()).sum();
        self.out.bunched = self.detector.bunched();
        if self.out.ctp_records.is_empty() {
            return Err(Error::EmptyInput("ctp_records"));
        }
        Ok(self.out)
    }
}
