//! Spatial-to-temporal headway conversion shared by the simulator and the
//! look-ahead rollout.

use crate::model::{Line, SECONDS_PER_HOUR};

/// A regulating speed in force for the rest of one bus line segment traversal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regulation {
    pub segment: usize,
    pub action: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusPosition {
    /// Ring offset in km, in `[0, ring_km)`.
    pub offset_km: f64,
    pub regulation: Option<Regulation>,
}

impl BusPosition {
    pub fn at(offset_km: f64) -> Self {
        Self {
            offset_km,
            regulation: None,
        }
    }
}

/// Reusable buffers for [`headways_into`].
#[derive(Debug, Default, Clone)]
pub struct HeadwayScratch {
    order: Vec<usize>,
}

/// Instantaneous headway of every bus: the expected time to drive from its
/// position to that of its nearest preceding bus. Buses are ordered around the
/// ring by (offset, index); co-located buses get a zero gap. Dwell and signal
/// time are not included. A bus's own regulating speed applies to the DBL road
/// segments of the bus line segment it is traversing.
pub fn headways(line: &Line, positions: &[BusPosition]) -> Vec<f64> {
    let mut out = Vec::with_capacity(positions.len());
    headways_into(line, positions, &mut HeadwayScratch::default(), &mut out);
    out
}

pub fn headways_into(line: &Line, positions: &[BusPosition], scratch: &mut HeadwayScratch, out: &mut Vec<f64>) {
    let n = positions.len();
    out.clear();
    out.resize(n, 0.0);
    if n == 0 {
        return;
    }
    let order = &mut scratch.order;
    order.clear();
    order.extend(0..n);
    order.sort_by(|&a, &b| {
        positions[a]
            .offset_km
            .total_cmp(&positions[b].offset_km)
            .then(a.cmp(&b))
    });
    for k in 0..n {
        let b = order[k];
        let ahead = order[(k + 1) % n];
        let mut gap = positions[ahead].offset_km - positions[b].offset_km;
        if k + 1 == n {
            gap += line.ring_km;
        }
        let gap = gap.max(0.0);
        out[b] = gap_time(line, &positions[b], gap);
    }
}

/// Expected time to cover `gap_km` ahead of a bus at `pos`.
pub fn gap_time(line: &Line, pos: &BusPosition, gap_km: f64) -> f64 {
    if gap_km <= 0.0 {
        return 0.0;
    }
    let mut t = line.base_time_over(pos.offset_km, gap_km);
    if let Some(reg) = pos.regulation {
        if reg.action != 0.0 {
            t += regulation_adjustment(line, pos.offset_km, gap_km, reg);
        }
    }
    t
}

fn regulation_adjustment(line: &Line, offset_km: f64, gap_km: f64, reg: Regulation) -> f64 {
    let seg = &line.segments[reg.segment];
    let mut rel = (offset_km - seg.start_km).rem_euclid(line.ring_km);
    // a bus sitting exactly at the segment start may have wrapped to ring_km
    if rel > seg.length_km + 1e-9 {
        if line.ring_km - rel < 1e-9 {
            rel = 0.0;
        } else {
            return 0.0;
        }
    }
    let end = rel + gap_km;
    let mut dt = 0.0;
    for &r in &seg.roads {
        let road = &line.roads[r];
        if !road.has_dbl {
            continue;
        }
        let r0 = road.start_km - seg.start_km;
        let r1 = r0 + road.length_km;
        let overlap = end.min(r1) - rel.max(r0);
        if overlap > 0.0 {
            dt += SECONDS_PER_HOUR
                * overlap
                * (1.0 / (road.speed_kmh + reg.action) - 1.0 / road.speed_kmh);
        }
    }
    dt
}
