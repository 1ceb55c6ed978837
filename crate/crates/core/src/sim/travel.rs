use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{LineRoad, SignalPhase, SignalPlan};

/// Fraction of the expected time below which a sampled traversal is clamped.
pub const MIN_TRAVEL_FRACTION: f64 = 0.2;

/// Samples the traversal time of a road segment: the expected time (with the
/// regulating speed applied on DBL roads) plus zero-mean normal noise,
/// clamped at 20% of the expectation. Exactly one normal deviate is drawn per
/// call, whatever the noise level.
pub fn sample_travel_time<R: Rng + ?Sized>(road: &LineRoad, action: f64, rng: &mut R) -> f64 {
    let mean = road.expected_time_s(action);
    let z: f64 = StandardNormal.sample(rng);
    (mean + road.sigma_s * z).max(MIN_TRAVEL_FRACTION * mean)
}

/// Waiting time at a pre-timed signal for a bus reaching the stop line at
/// `arrival_s`. The signal holds its initial phase for `initial_remaining_s`
/// and then alternates.
pub fn signal_delay(plan: &SignalPlan, arrival_s: f64) -> f64 {
    let t = arrival_s.max(0.0);
    if t < plan.initial_remaining_s {
        return match plan.initial_phase {
            SignalPhase::Green => 0.0,
            SignalPhase::Red => plan.initial_remaining_s - t,
        };
    }
    let u = (t - plan.initial_remaining_s).rem_euclid(plan.cycle_s());
    match plan.initial_phase {
        // red follows the initial green
        SignalPhase::Green if u < plan.red_s => plan.red_s - u,
        SignalPhase::Green => 0.0,
        SignalPhase::Red if u < plan.green_s => 0.0,
        SignalPhase::Red => plan.cycle_s() - u,
    }
}
