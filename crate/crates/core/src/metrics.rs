//! Headway stability indices, action statistics and passenger service levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{CompletedTrip, SimOutcome};

/// Dynamic circle headway: the mean instantaneous headway at one instant.
pub fn dch(headways: &[f64]) -> Result<f64> {
    if headways.is_empty() {
        return Err(Error::EmptyInput("dch"));
    }
    Ok(mean(headways))
}

/// Population standard deviation of the headways around their mean.
pub fn sigma_h(headways: &[f64]) -> Result<f64> {
    if headways.is_empty() {
        return Err(Error::EmptyInput("sigma_h"));
    }
    Ok((sum_sq_dev(headways) / headways.len() as f64).sqrt())
}

/// First stability index: mean of the per-CTP headway deviations.
pub fn fsi(sigma_series: &[f64]) -> Result<f64> {
    if sigma_series.is_empty() {
        return Err(Error::EmptyInput("fsi"));
    }
    Ok(mean(sigma_series))
}

/// Sample standard deviation (n - 1 denominator) of the per-CTP headway
/// deviations around the stability index.
pub fn fsi_std(sigma_series: &[f64]) -> Result<f64> {
    if sigma_series.len() < 2 {
        return Err(Error::TooShort {
            what: "fsi_std",
            min: 2,
            got: sigma_series.len(),
        });
    }
    Ok((sum_sq_dev(sigma_series) / (sigma_series.len() - 1) as f64).sqrt())
}

/// Cost of an action: squared deviation of the headways from their mean,
/// summed over buses.
pub fn action_cost(headways: &[f64]) -> Result<f64> {
    if headways.is_empty() {
        return Err(Error::EmptyInput("action_cost"));
    }
    Ok(sum_sq_dev(headways))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        0.0
    } else {
        (sum_sq_dev(xs) / (xs.len() - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single observation.
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: sample_std(xs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerStats {
    pub wait: MeanStd,
    pub ride: MeanStd,
    pub travel: MeanStd,
}

/// Service level over passengers who completed their trip. `stats` is `None`
/// when nobody did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerReport {
    pub n_p: usize,
    pub stats: Option<PassengerStats>,
}

pub fn passenger_stats(trips: &[CompletedTrip]) -> PassengerReport {
    if trips.is_empty() {
        return PassengerReport { n_p: 0, stats: None };
    }
    let wait: Vec<f64> = trips.iter().map(|t| t.wait_s).collect();
    let ride: Vec<f64> = trips.iter().map(|t| t.ride_s).collect();
    let travel: Vec<f64> = trips.iter().map(|t| t.wait_s + t.ride_s).collect();
    PassengerReport {
        n_p: trips.len(),
        stats: Some(PassengerStats {
            wait: MeanStd::of(&wait),
            ride: MeanStd::of(&ride),
            travel: MeanStd::of(&travel),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub fsi: f64,
    pub fsi_std: f64,
    pub n_ctp: usize,
    /// Sum of |a| over nonzero regulating speeds.
    pub action_abs_sum: f64,
    /// Mean of |a| over nonzero regulating speeds (0 when there are none).
    pub action_abs_mean: f64,
    /// Sample standard deviation of |a| over nonzero regulating speeds.
    pub action_abs_std: f64,
    /// Number of nonzero regulating speeds applied.
    pub n_actions: usize,
    /// Number of times the controller was consulted, zero actions included.
    pub n_decisions: usize,
    /// `action_abs_sum / n_decisions` (0 when there were no decisions).
    pub decision_abs_mean: f64,
    pub bunched: bool,
}

pub fn stability_report(outcome: &SimOutcome) -> Result<StabilityReport> {
    let sigmas = outcome.sigma_series()?;
    let abs: Vec<f64> = outcome.action_log.iter().map(|a| a.action.abs()).collect();
    let action_abs_sum = abs.iter().fold(0.0, |s, a| s + a);
    Ok(StabilityReport {
        fsi: fsi(&sigmas)?,
        fsi_std: if sigmas.len() >= 2 { fsi_std(&sigmas)? } else { 0.0 },
        n_ctp: sigmas.len(),
        action_abs_sum,
        action_abs_mean: if abs.is_empty() { 0.0 } else { mean(&abs) },
        action_abs_std: sample_std(&abs),
        n_actions: abs.len(),
        n_decisions: outcome.decisions,
        decision_abs_mean: if outcome.decisions == 0 {
            0.0
        } else {
            action_abs_sum / outcome.decisions as f64
        },
        bunched: outcome.bunched,
    })
}
