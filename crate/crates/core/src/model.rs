//! Scenario schema, validation and the resolved, immutable description of a
//! circular bus line.
//!
//! [`LineConfig`] mirrors the on-disk JSON document field for field; [`Line`]
//! is what the simulator, controller and optimizer work with. A `Line` is only
//! ever built from a config that passed [`validate`], and is read-only
//! afterwards, so it can be shared across concurrent replications.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerSpec;
use crate::error::{Error, Result};

/// Seconds per hour: converts km and km/h to seconds.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Tolerance on the sum of a destination series. Published series are rounded
/// to four decimals, so an exact unit sum cannot be demanded.
pub const SERIES_SUM_TOLERANCE: f64 = 1e-3;

const SHARE_SUM_TOLERANCE: f64 = 1e-9;
const RING_LENGTH_TOLERANCE: f64 = 1e-6;
/// Slack allowed when comparing cost sums with limits, so that sums of
/// decimal costs that land exactly on a limit are not rejected by rounding.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub id: u32,
    /// Passengers per minute.
    pub arrival_rate: f64,
    /// Probability of the n-th downstream stop being the destination.
    pub destination_series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub id: u32,
    pub length_km: f64,
    pub has_dbl: bool,
    /// Overrides the line-wide common/DBL speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_speed_kmh: Option<f64>,
    /// Overrides the line-wide sigma rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusLineSegment {
    pub id: u32,
    pub road_segments: Vec<u32>,
    pub from_stop: u32,
    pub to_stop: u32,
    pub eligible_for_dbl: bool,
    /// Regulating speeds in km/h. Defaults to the run's default action set for
    /// eligible segments and to `{0}` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_set: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub money_cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalPhase {
    Red,
    Green,
}

/// A pre-timed two-phase signal on the bus approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub id: u32,
    pub host_segment: u32,
    pub red_s: f64,
    pub green_s: f64,
    pub initial_phase: SignalPhase,
    pub initial_remaining_s: f64,
    /// Fraction of the host bus-line segment's length. When absent the signal
    /// sits on the k-th internal road-segment boundary of its host (k being
    /// its rank among the host's signals), or mid-segment if there is none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_on_segment: Option<f64>,
}

impl SignalPlan {
    pub fn cycle_s(&self) -> f64 {
        self.red_s + self.green_s
    }

    fn initial_phase_duration(&self) -> f64 {
        match self.initial_phase {
            SignalPhase::Red => self.red_s,
            SignalPhase::Green => self.green_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub id: u32,
    pub capacity: u32,
    pub initial_stop: u32,
    pub initial_activation_delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerProfile {
    pub share: f64,
    pub board_s: f64,
    pub alight_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub influence_limit: f64,
    pub budget_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRule {
    pub common_s_per_km: f64,
    pub dbl_s_per_km: f64,
}

/// A deployment pattern as written in a scenario or on the command line:
/// either a preset name or an explicit list of bus-line segment ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternSpec {
    Preset(String),
    Segments(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub ring_length_km: f64,
    pub observation_period_s: f64,
    pub common_speed_kmh: f64,
    pub dbl_speed_kmh: f64,
    pub sigma_rule: SigmaRule,
    pub default_action_set: Vec<f64>,
    pub controller: ControllerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PatternSpec>,
    #[serde(default)]
    pub presets: BTreeMap<String, Vec<u32>>,
}

/// The scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub stops: Vec<Stop>,
    pub segments: Vec<RoadSegment>,
    pub bus_line_segments: Vec<BusLineSegment>,
    pub signals: Vec<SignalPlan>,
    pub buses: Vec<BusSpec>,
    pub passenger_profiles: Vec<PassengerProfile>,
    pub constraints: ConstraintSpec,
    pub run: RunConfig,
}

impl LineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Canonical serialization: struct field order, two-space indentation and
    /// a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("config serializes");
        out.push('\n');
        out
    }
}

/// One broken invariant of a [`LineConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

struct Violations(Vec<Violation>);

impl Violations {
    fn check(&mut self, ok: bool, field: impl FnOnce() -> String, rule: &str) {
        if !ok {
            self.0.push(Violation {
                field: field(),
                rule: rule.to_string(),
            });
        }
    }
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn finite_pos(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Checks every invariant of the scenario schema. An empty result means the
/// config can be turned into a [`Line`].
pub fn validate(config: &LineConfig) -> Vec<Violation> {
    let mut v = Violations(Vec::new());
    let n_stops = config.stops.len();

    v.check(n_stops >= 2, || "stops".into(), "a ring needs at least two stops");
    for (k, stop) in config.stops.iter().enumerate() {
        let field = |name: &str| format!("stops[{}].{name}", stop.id);
        v.check(
            stop.id as usize == k + 1,
            || field("id"),
            "stop ids must be 1..n in ring order",
        );
        v.check(
            finite_nonneg(stop.arrival_rate),
            || field("arrival_rate"),
            "must be >= 0",
        );
        let sum: f64 = stop.destination_series.iter().sum();
        v.check(
            !stop.destination_series.is_empty() && (sum - 1.0).abs() <= SERIES_SUM_TOLERANCE,
            || field("destination_series"),
            "probabilities must sum to 1",
        );
        v.check(
            stop.destination_series.iter().all(|p| finite_nonneg(*p)),
            || field("destination_series"),
            "probabilities must be >= 0",
        );
        v.check(
            stop.destination_series.len() < n_stops.max(1),
            || field("destination_series"),
            "series longer than the number of downstream stops",
        );
    }

    let mut road_ids = BTreeMap::new();
    for (k, seg) in config.segments.iter().enumerate() {
        let field = |name: &str| format!("segments[{}].{name}", seg.id);
        v.check(
            road_ids.insert(seg.id, k).is_none(),
            || field("id"),
            "duplicate road segment id",
        );
        v.check(finite_pos(seg.length_km), || field("length_km"), "must be > 0");
        if let Some(speed) = seg.base_speed_kmh {
            v.check(finite_pos(speed), || field("base_speed_kmh"), "must be > 0");
        }
        if let Some(sigma) = seg.noise_sigma_s {
            v.check(finite_nonneg(sigma), || field("noise_sigma_s"), "must be >= 0");
        }
    }

    let run = &config.run;
    let mut used_roads = BTreeMap::new();
    let mut endpoint_count = vec![0usize; n_stops];
    v.check(
        config.bus_line_segments.len() == n_stops,
        || "bus_line_segments".into(),
        "there must be exactly one bus line segment per stop",
    );
    for (k, bls) in config.bus_line_segments.iter().enumerate() {
        let field = |name: &str| format!("bus_line_segments[{}].{name}", bls.id);
        v.check(
            bls.id as usize == k + 1 && bls.from_stop == bls.id,
            || field("id"),
            "bus line segments must be listed in ring order, segment k leaving stop k",
        );
        let successor = if n_stops == 0 { 0 } else { bls.from_stop as usize % n_stops + 1 };
        v.check(
            bls.to_stop as usize == successor,
            || field("to_stop"),
            "to_stop must be the ring successor of from_stop",
        );
        for stop in [bls.from_stop, bls.to_stop] {
            if (1..=n_stops).contains(&(stop as usize)) {
                endpoint_count[stop as usize - 1] += 1;
            }
        }
        v.check(
            !bls.road_segments.is_empty(),
            || field("road_segments"),
            "must contain at least one road segment",
        );
        for rid in &bls.road_segments {
            v.check(
                road_ids.contains_key(rid),
                || field("road_segments"),
                "references an unknown road segment",
            );
            v.check(
                used_roads.insert(*rid, bls.id).is_none(),
                || field("road_segments"),
                "road segment already belongs to another bus line segment",
            );
        }
        let actions = resolved_action_set(bls, run);
        v.check(
            actions.iter().any(|a| *a == 0.0),
            || field("action_set"),
            "must contain 0",
        );
        v.check(
            bls.eligible_for_dbl || actions == [0.0],
            || field("action_set"),
            "must be {0} when the segment is not eligible",
        );
        v.check(
            actions.iter().all(|a| a.is_finite()),
            || field("action_set"),
            "must be finite",
        );
        for rid in &bls.road_segments {
            if let Some(&ri) = road_ids.get(rid) {
                let seg = &config.segments[ri];
                if seg.has_dbl {
                    let base = seg.base_speed_kmh.unwrap_or(run.dbl_speed_kmh);
                    v.check(
                        actions.iter().all(|a| base + a > 0.0),
                        || field("action_set"),
                        "regulated speed must stay > 0 on every DBL road segment",
                    );
                }
            }
        }
        for (name, cost) in [("influence_cost", bls.influence_cost), ("money_cost", bls.money_cost)] {
            if let Some(c) = cost {
                v.check(finite_nonneg(c), || field(name), "must be >= 0");
            }
        }
    }
    for (k, count) in endpoint_count.iter().enumerate() {
        v.check(
            *count == 2,
            || format!("stops[{}]", k + 1),
            "every stop must be an endpoint of exactly two bus line segments",
        );
    }
    for seg in &config.segments {
        v.check(
            used_roads.contains_key(&seg.id),
            || format!("segments[{}]", seg.id),
            "road segment is not part of any bus line segment",
        );
    }

    for sig in &config.signals {
        let field = |name: &str| format!("signals[{}].{name}", sig.id);
        v.check(finite_pos(sig.red_s), || field("red_s"), "must be > 0");
        v.check(finite_pos(sig.green_s), || field("green_s"), "must be > 0");
        v.check(
            sig.initial_remaining_s >= 0.0
                && sig.initial_remaining_s <= sig.initial_phase_duration(),
            || field("initial_remaining_s"),
            "must lie within the initial phase",
        );
        v.check(
            config.bus_line_segments.iter().any(|b| b.id == sig.host_segment),
            || field("host_segment"),
            "unknown bus line segment",
        );
        if let Some(p) = sig.position_on_segment {
            v.check((0.0..=1.0).contains(&p), || field("position_on_segment"), "must lie in [0, 1]");
        }
    }

    let mut bus_ids = BTreeSet::new();
    v.check(config.buses.len() >= 2, || "buses".into(), "at least two buses are required");
    for bus in &config.buses {
        let field = |name: &str| format!("buses[{}].{name}", bus.id);
        v.check(bus_ids.insert(bus.id), || field("id"), "duplicate bus id");
        v.check(bus.capacity > 0, || field("capacity"), "must be > 0");
        v.check(
            (1..=n_stops).contains(&(bus.initial_stop as usize)),
            || field("initial_stop"),
            "unknown stop",
        );
        v.check(
            finite_nonneg(bus.initial_activation_delay_s),
            || field("initial_activation_delay_s"),
            "must be >= 0",
        );
    }

    let shares: f64 = config.passenger_profiles.iter().map(|p| p.share).sum();
    v.check(
        !config.passenger_profiles.is_empty() && (shares - 1.0).abs() <= SHARE_SUM_TOLERANCE,
        || "passenger_profiles".into(),
        "shares must sum to 1",
    );
    for (k, p) in config.passenger_profiles.iter().enumerate() {
        let field = |name: &str| format!("passenger_profiles[{k}].{name}");
        v.check(finite_nonneg(p.share), || field("share"), "must be >= 0");
        v.check(finite_pos(p.board_s), || field("board_s"), "must be > 0");
        v.check(finite_pos(p.alight_s), || field("alight_s"), "must be > 0");
    }

    v.check(
        finite_nonneg(config.constraints.influence_limit),
        || "constraints.influence_limit".into(),
        "must be >= 0",
    );
    v.check(
        finite_nonneg(config.constraints.budget_limit),
        || "constraints.budget_limit".into(),
        "must be >= 0",
    );

    let total: f64 = config.segments.iter().map(|s| s.length_km).sum();
    v.check(
        (total - run.ring_length_km).abs() <= RING_LENGTH_TOLERANCE,
        || "run.ring_length_km".into(),
        "must equal the sum of road segment lengths",
    );
    v.check(
        finite_pos(run.observation_period_s),
        || "run.observation_period_s".into(),
        "must be > 0",
    );
    v.check(finite_pos(run.common_speed_kmh), || "run.common_speed_kmh".into(), "must be > 0");
    v.check(finite_pos(run.dbl_speed_kmh), || "run.dbl_speed_kmh".into(), "must be > 0");
    v.check(
        finite_nonneg(run.sigma_rule.common_s_per_km) && finite_nonneg(run.sigma_rule.dbl_s_per_km),
        || "run.sigma_rule".into(),
        "coefficients must be >= 0",
    );
    v.check(
        run.default_action_set.iter().any(|a| *a == 0.0),
        || "run.default_action_set".into(),
        "must contain 0",
    );
    if let ControllerSpec::Lookahead { depth, gamma } = run.controller {
        v.check(depth >= 1, || "run.controller.depth".into(), "must be >= 1");
        v.check(gamma > 0.0 && gamma <= 1.0, || "run.controller.gamma".into(), "must lie in (0, 1]");
    }
    let eligible: BTreeSet<u32> = config
        .bus_line_segments
        .iter()
        .filter(|b| b.eligible_for_dbl)
        .map(|b| b.id)
        .collect();
    for (name, ids) in &run.presets {
        v.check(
            ids.iter().all(|id| eligible.contains(id)),
            || format!("run.presets.{name}"),
            "may only contain eligible bus line segments",
        );
    }
    match &run.pattern {
        Some(PatternSpec::Preset(name)) => v.check(
            run.presets.contains_key(name),
            || "run.pattern".into(),
            "unknown preset",
        ),
        Some(PatternSpec::Segments(ids)) => v.check(
            ids.iter().all(|id| eligible.contains(id)),
            || "run.pattern".into(),
            "may only contain eligible bus line segments",
        ),
        None => {}
    }

    v.0
}

fn resolved_action_set(bls: &BusLineSegment, run: &RunConfig) -> Vec<f64> {
    match &bls.action_set {
        Some(set) => set.clone(),
        None if bls.eligible_for_dbl => run.default_action_set.clone(),
        None => vec![0.0],
    }
}

#[derive(Debug, Clone)]
pub struct LineStop {
    pub id: u32,
    pub rate_per_s: f64,
    pub destination_series: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LineRoad {
    pub id: u32,
    pub segment: usize,
    pub length_km: f64,
    pub has_dbl: bool,
    pub speed_kmh: f64,
    pub sigma_s: f64,
    /// Ring offset of the road segment's start.
    pub start_km: f64,
}

impl LineRoad {
    /// Expected traversal time under regulating speed `action` (ignored on
    /// common road segments).
    pub fn expected_time_s(&self, action: f64) -> f64 {
        let speed = if self.has_dbl { self.speed_kmh + action } else { self.speed_kmh };
        SECONDS_PER_HOUR * self.length_km / speed
    }
}

/// A piece of a bus line segment: either a stretch of one road segment or a
/// signal stop line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leg {
    Cruise {
        road: usize,
        km0: f64,
        km1: f64,
        /// Fraction of the road segment's length covered by this piece.
        share: f64,
    },
    Signal {
        signal: usize,
        km: f64,
    },
}

#[derive(Debug, Clone)]
pub struct LineSegment {
    pub id: u32,
    pub from_stop: usize,
    pub to_stop: usize,
    pub roads: Vec<usize>,
    pub start_km: f64,
    pub length_km: f64,
    pub eligible: bool,
    pub actions: Vec<f64>,
    pub influence_cost: Option<f64>,
    pub money_cost: Option<f64>,
    /// Legs in travel order, with km measured from the segment start.
    pub legs: Vec<Leg>,
}

#[derive(Debug, Clone)]
pub struct LineSignal {
    pub plan: SignalPlan,
    pub segment: usize,
    pub km: f64,
}

/// A validated, index-resolved line. Stops, bus line segments and buses are
/// addressed by zero-based index (`id - 1`); bus line segment `g` leaves stop
/// `g`.
#[derive(Debug, Clone)]
pub struct Line {
    config: LineConfig,
    pub stops: Vec<LineStop>,
    pub roads: Vec<LineRoad>,
    pub segments: Vec<LineSegment>,
    pub signals: Vec<LineSignal>,
    pub buses: Vec<BusSpec>,
    pub profiles: Vec<PassengerProfile>,
    pub ring_km: f64,
    pub horizon_s: f64,
    /// Cumulative expected unregulated travel time at each road boundary;
    /// `time_prefix[k]` is the time from the ring origin to `roads[k].start_km`.
    time_prefix: Vec<f64>,
}

impl Line {
    pub fn new(config: LineConfig) -> Result<Self> {
        let violations = validate(&config);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let run = &config.run;
        let road_index: BTreeMap<u32, &RoadSegment> =
            config.segments.iter().map(|s| (s.id, s)).collect();

        let mut roads = Vec::with_capacity(config.segments.len());
        let mut segments = Vec::with_capacity(config.bus_line_segments.len());
        let n_stops = config.stops.len();
        let mut km = 0.0;
        for (g, bls) in config.bus_line_segments.iter().enumerate() {
            let start_km = km;
            let mut members = Vec::new();
            for rid in &bls.road_segments {
                let seg = road_index[rid];
                let speed = seg.base_speed_kmh.unwrap_or(if seg.has_dbl {
                    run.dbl_speed_kmh
                } else {
                    run.common_speed_kmh
                });
                let coef = if seg.has_dbl {
                    run.sigma_rule.dbl_s_per_km
                } else {
                    run.sigma_rule.common_s_per_km
                };
                members.push(roads.len());
                roads.push(LineRoad {
                    id: seg.id,
                    segment: g,
                    length_km: seg.length_km,
                    has_dbl: seg.has_dbl,
                    speed_kmh: speed,
                    sigma_s: seg.noise_sigma_s.unwrap_or(coef * seg.length_km),
                    start_km: km,
                });
                km += seg.length_km;
            }
            segments.push(LineSegment {
                id: bls.id,
                from_stop: g,
                to_stop: (g + 1) % n_stops,
                roads: members,
                start_km,
                length_km: km - start_km,
                eligible: bls.eligible_for_dbl,
                actions: resolved_action_set(bls, run),
                influence_cost: bls.influence_cost,
                money_cost: bls.money_cost,
                legs: Vec::new(),
            });
        }

        let mut signals = Vec::with_capacity(config.signals.len());
        let mut rank_in_host: BTreeMap<u32, usize> = BTreeMap::new();
        for plan in &config.signals {
            let g = plan.host_segment as usize - 1;
            let seg = &segments[g];
            let rank = rank_in_host.entry(plan.host_segment).or_insert(0);
            let km = match plan.position_on_segment {
                Some(f) => f * seg.length_km,
                None if *rank + 1 < seg.roads.len() => {
                    let boundary_road = seg.roads[*rank + 1];
                    roads[boundary_road].start_km - seg.start_km
                }
                None => 0.5 * seg.length_km,
            };
            *rank += 1;
            signals.push(LineSignal {
                plan: plan.clone(),
                segment: g,
                km,
            });
        }

        for (g, seg) in segments.iter_mut().enumerate() {
            seg.legs = build_legs(seg, &roads, &signals, g);
        }

        let mut time_prefix = Vec::with_capacity(roads.len() + 1);
        let mut t = 0.0;
        for road in &roads {
            time_prefix.push(t);
            t += road.expected_time_s(0.0);
        }
        time_prefix.push(t);

        let stops = config
            .stops
            .iter()
            .map(|s| LineStop {
                id: s.id,
                rate_per_s: s.arrival_rate / 60.0,
                destination_series: s.destination_series.clone(),
            })
            .collect();

        Ok(Line {
            stops,
            roads,
            segments,
            signals,
            buses: config.buses.clone(),
            profiles: config.passenger_profiles.clone(),
            ring_km: run.ring_length_km,
            horizon_s: run.observation_period_s,
            time_prefix,
            config,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(LineConfig::load(path)?)
    }

    pub fn config(&self) -> &LineConfig {
        &self.config
    }

    pub fn n_stops(&self) -> usize {
        self.stops.len()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Index of the bus line segment with the given id.
    pub fn segment_index(&self, id: u32) -> Result<usize> {
        let idx = (id as usize).wrapping_sub(1);
        if idx < self.segments.len() {
            Ok(idx)
        } else {
            Err(Error::UnknownSegment(id))
        }
    }

    /// Ring offset (km) of the point `fraction` of the way along bus line
    /// segment `segment_id`. Wraps modulo the ring length.
    pub fn route_offset(&self, segment_id: u32, fraction: f64) -> Result<f64> {
        let seg = &self.segments[self.segment_index(segment_id)?];
        Ok(self.wrap(seg.start_km + fraction.clamp(0.0, 1.0) * seg.length_km))
    }

    pub fn stop_offset(&self, stop: usize) -> f64 {
        self.segments[stop].start_km
    }

    pub fn wrap(&self, km: f64) -> f64 {
        let x = km.rem_euclid(self.ring_km);
        // rem_euclid can round up to exactly the modulus
        if x >= self.ring_km {
            0.0
        } else {
            x
        }
    }

    /// Expected unregulated time to drive one full lap, without dwells or
    /// signal delays.
    pub fn lap_time_s(&self) -> f64 {
        *self.time_prefix.last().unwrap()
    }

    /// Cumulative expected unregulated time from the ring origin to offset
    /// `km` in `[0, ring_km]`.
    fn time_at(&self, km: f64) -> f64 {
        let k = self
            .roads
            .partition_point(|r| r.start_km <= km)
            .saturating_sub(1);
        let road = &self.roads[k];
        let within = (km - road.start_km).clamp(0.0, road.length_km);
        self.time_prefix[k] + road.expected_time_s(0.0) * within / road.length_km
    }

    /// Expected unregulated time to drive `gap_km` forward from ring offset
    /// `from_km`.
    pub fn base_time_over(&self, from_km: f64, gap_km: f64) -> f64 {
        let start = self.wrap(from_km);
        let laps = (gap_km / self.ring_km).floor();
        let rest = gap_km - laps * self.ring_km;
        let end = start + rest;
        let partial = if end <= self.ring_km {
            self.time_at(end) - self.time_at(start)
        } else {
            self.lap_time_s() - self.time_at(start) + self.time_at(end - self.ring_km)
        };
        laps * self.lap_time_s() + partial
    }

    /// Demand-weighted mean boarding time per passenger.
    pub fn mean_board_s(&self) -> f64 {
        self.profiles.iter().map(|p| p.share * p.board_s).sum()
    }

    pub fn eligible_ids(&self) -> Vec<u32> {
        self.segments.iter().filter(|s| s.eligible).map(|s| s.id).collect()
    }

    pub fn preset(&self, name: &str) -> Result<DeploymentPattern> {
        let ids = self
            .config
            .run
            .presets
            .get(name)
            .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
        DeploymentPattern::new(self, ids.iter().copied())
    }

    pub fn resolve_pattern(&self, spec: &PatternSpec) -> Result<DeploymentPattern> {
        match spec {
            PatternSpec::Preset(name) => self.preset(name),
            PatternSpec::Segments(ids) => DeploymentPattern::new(self, ids.iter().copied()),
        }
    }

    /// The scenario's own pattern, or every eligible segment when it names
    /// none.
    pub fn default_pattern(&self) -> Result<DeploymentPattern> {
        match &self.config.run.pattern {
            Some(spec) => self.resolve_pattern(spec),
            None => DeploymentPattern::new(self, self.eligible_ids()),
        }
    }
}

/// Signals closer than this to a road boundary are treated as sitting on it.
const BOUNDARY_SNAP_KM: f64 = 1e-9;

fn build_legs(seg: &LineSegment, roads: &[LineRoad], signals: &[LineSignal], g: usize) -> Vec<Leg> {
    let mut hosted: Vec<(f64, usize)> = signals
        .iter()
        .enumerate()
        .filter(|(_, s)| s.segment == g)
        .map(|(k, s)| (s.km, k))
        .collect();
    hosted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut next_signal = hosted.into_iter().peekable();

    let mut legs = Vec::new();
    for &r in &seg.roads {
        let road = &roads[r];
        let r0 = road.start_km - seg.start_km;
        let r1 = r0 + road.length_km;
        let mut cursor = r0;
        while let Some(&(km, k)) = next_signal.peek() {
            // signals at the far boundary belong to the next road's start
            if km >= r1 - BOUNDARY_SNAP_KM && r != *seg.roads.last().unwrap() {
                break;
            }
            let km = km.min(r1);
            if km > cursor {
                legs.push(Leg::Cruise {
                    road: r,
                    km0: cursor,
                    km1: km,
                    share: (km - cursor) / road.length_km,
                });
                cursor = km;
            }
            legs.push(Leg::Signal { signal: k, km });
            next_signal.next();
        }
        if r1 > cursor {
            legs.push(Leg::Cruise {
                road: r,
                km0: cursor,
                km1: r1,
                share: (r1 - cursor) / road.length_km,
            });
        }
    }
    legs
}

/// The set of eligible bus line segments equipped with a controllable DBL.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeploymentPattern {
    chosen: BTreeSet<u32>,
}

impl DeploymentPattern {
    pub fn new(line: &Line, ids: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut chosen = BTreeSet::new();
        for id in ids {
            let g = line.segment_index(id)?;
            if !line.segments[g].eligible {
                return Err(Error::NotEligible(id));
            }
            chosen.insert(id);
        }
        Ok(Self { chosen })
    }

    /// A pattern not checked against any line; for synthetic evaluators.
    pub fn unchecked(ids: impl IntoIterator<Item = u32>) -> Self {
        Self {
            chosen: ids.into_iter().collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.chosen.iter().copied()
    }

    pub fn chosen(&self) -> &BTreeSet<u32> {
        &self.chosen
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    pub fn contains_id(&self, id: u32) -> bool {
        self.chosen.contains(&id)
    }

    /// Per-segment-index membership mask.
    pub fn mask(&self, line: &Line) -> Vec<bool> {
        line.segments.iter().map(|s| self.chosen.contains(&s.id)).collect()
    }

    /// Binary decision vector ordered like `candidates`.
    pub fn to_binary(&self, candidates: &[u32]) -> Vec<u8> {
        candidates.iter().map(|id| self.chosen.contains(id) as u8).collect()
    }
}

impl fmt::Display for DeploymentPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.chosen.iter().map(|id| id.to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub feasible: bool,
    pub influence_sum: f64,
    pub money_sum: f64,
}

/// Sums the influence and money costs of the chosen segments and compares them
/// with the limits. Segments without cost data contribute nothing.
pub fn constraint_check(line: &Line, pattern: &DeploymentPattern, spec: &ConstraintSpec) -> ConstraintCheck {
    let (influence_sum, money_sum) = pattern
        .ids()
        .filter_map(|id| line.segment_index(id).ok())
        .map(|g| &line.segments[g])
        .fold((0.0, 0.0), |(f1, f2), s| {
            (f1 + s.influence_cost.unwrap_or(0.0), f2 + s.money_cost.unwrap_or(0.0))
        });
    ConstraintCheck {
        feasible: influence_sum <= spec.influence_limit + CONSTRAINT_TOLERANCE
            && money_sum <= spec.budget_limit + CONSTRAINT_TOLERANCE,
        influence_sum,
        money_sum,
    }
}
