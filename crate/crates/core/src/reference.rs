//! The bundled 36-stop, 11-bus reference line.

use crate::model::{BusLineSegment, BusSpec, Line, LineConfig, RoadSegment, RunConfig, Stop};

/// Raw text of `data/reference_line.json`.
pub const REFERENCE_JSON: &str = include_str!("../data/reference_line.json");

pub fn config() -> LineConfig {
    LineConfig::from_json(REFERENCE_JSON).expect("bundled reference scenario parses")
}

pub fn line() -> Line {
    Line::new(config()).expect("bundled reference scenario is valid")
}

/// A small synthetic ring: `n_stops` stops joined by 1 km bus line segments,
/// each a single road segment, with buses spread evenly over the stops and
/// all activated at time 0. Segments listed in `dbl` carry a lane and are
/// eligible for regulation with the default action set.
pub fn toy_config(n_stops: usize, n_buses: usize, dbl: &[u32], rate_per_min: f64) -> LineConfig {
    let reference = config();
    let stops = (1..=n_stops as u32)
        .map(|id| Stop {
            id,
            arrival_rate: rate_per_min,
            destination_series: vec![1.0],
        })
        .collect();
    let segments = (1..=n_stops as u32)
        .map(|id| RoadSegment {
            id,
            length_km: 1.0,
            has_dbl: dbl.contains(&id),
            base_speed_kmh: None,
            noise_sigma_s: None,
        })
        .collect();
    let bus_line_segments = (1..=n_stops as u32)
        .map(|id| BusLineSegment {
            id,
            road_segments: vec![id],
            from_stop: id,
            to_stop: id % n_stops as u32 + 1,
            eligible_for_dbl: dbl.contains(&id),
            action_set: None,
            influence_cost: None,
            money_cost: None,
        })
        .collect();
    let buses = (0..n_buses)
        .map(|b| BusSpec {
            id: b as u32 + 1,
            capacity: 70,
            initial_stop: (b * n_stops / n_buses) as u32 + 1,
            initial_activation_delay_s: 0.0,
        })
        .collect();
    LineConfig {
        stops,
        segments,
        bus_line_segments,
        signals: Vec::new(),
        buses,
        passenger_profiles: reference.passenger_profiles,
        constraints: reference.constraints,
        run: RunConfig {
            ring_length_km: n_stops as f64,
            observation_period_s: 3600.0,
            pattern: None,
            presets: Default::default(),
            ..reference.run
        },
    }
}
