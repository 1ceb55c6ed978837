//! Per-run reports and their aggregation into one table row.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerSpec;
use crate::error::{Error, Result};
use crate::metrics::{passenger_stats, stability_report, PassengerReport, StabilityReport};
use crate::model::DeploymentPattern;
use crate::sim::{PassengerCounts, ReplicationSeed, SimOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: ReplicationSeed,
    pub pattern: Vec<u32>,
    pub controller: ControllerSpec,
    pub stability: StabilityReport,
    pub passengers: PassengerReport,
    pub counts: PassengerCounts,
}

impl RunReport {
    pub fn new(
        seed: ReplicationSeed,
        pattern: &DeploymentPattern,
        controller: ControllerSpec,
        outcome: &SimOutcome,
    ) -> Result<Self> {
        Ok(Self {
            seed,
            pattern: pattern.ids().collect(),
            controller,
            stability: stability_report(outcome)?,
            passengers: passenger_stats(&outcome.completed_trips),
            counts: outcome.passengers,
        })
    }
}

/// Means over replications. Passenger times average the per-run means and
/// standard deviations of runs in which somebody completed a trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub replications: usize,
    pub fsi: f64,
    pub fsi_std: f64,
    pub n_ctp: f64,
    pub action_abs_sum: f64,
    pub decision_abs_mean: f64,
    pub action_abs_mean: f64,
    pub action_abs_std: f64,
    pub n_decisions: f64,
    pub n_actions: f64,
    pub bunch_fraction: f64,
    pub n_p: f64,
    pub wait_mean_s: f64,
    pub wait_std_s: f64,
    pub ride_mean_s: f64,
    pub ride_std_s: f64,
    pub travel_mean_s: f64,
    pub travel_std_s: f64,
}

impl AggregateRow {
    pub fn from_reports(label: impl Into<String>, reports: &[RunReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptyInput("aggregate"));
        }
        let avg = |f: &dyn Fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
        let served: Vec<_> = reports.iter().filter_map(|r| r.passengers.stats.as_ref()).collect();
        let pavg = |f: &dyn Fn(&crate::metrics::PassengerStats) -> f64| {
            if served.is_empty() {
                f64::NAN
            } else {
                served.iter().map(|s| f(s)).sum::<f64>() / served.len() as f64
            }
        };
        Ok(Self {
            label: label.into(),
            replications: reports.len(),
            fsi: avg(&|r| r.stability.fsi),
            fsi_std: avg(&|r| r.stability.fsi_std),
            n_ctp: avg(&|r| r.stability.n_ctp as f64),
            action_abs_sum: avg(&|r| r.stability.action_abs_sum),
            decision_abs_mean: avg(&|r| r.stability.decision_abs_mean),
            action_abs_mean: avg(&|r| r.stability.action_abs_mean),
            action_abs_std: avg(&|r| r.stability.action_abs_std),
            n_decisions: avg(&|r| r.stability.n_decisions as f64),
            n_actions: avg(&|r| r.stability.n_actions as f64),
            bunch_fraction: avg(&|r| if r.stability.bunched { 1.0 } else { 0.0 }),
            n_p: avg(&|r| r.passengers.n_p as f64),
            wait_mean_s: pavg(&|s| s.wait.mean),
            wait_std_s: pavg(&|s| s.wait.std),
            ride_mean_s: pavg(&|s| s.ride.mean),
            ride_std_s: pavg(&|s| s.ride.std),
            travel_mean_s: pavg(&|s| s.travel.mean),
            travel_std_s: pavg(&|s| s.travel.std),
        })
    }

    /// "Yes" when most replications bunched.
    pub fn bunch_verdict(&self) -> &'static str {
        if self.bunch_fraction > 0.5 {
            "Yes"
        } else {
            "No"
        }
    }
}

const HEADER: [&str; 20] = [
    "label",
    "replications",
    "fsi",
    "fsi_std",
    "n_ctp",
    "action_abs_sum",
    "decision_abs_mean",
    "action_abs_mean",
    "action_abs_std",
    "n_decisions",
    "n_actions",
    "bunch_fraction",
    "bunch",
    "n_p",
    "wait_mean_s",
    "wait_std_s",
    "ride_mean_s",
    "ride_std_s",
    "travel_mean_s",
    "travel_std_s",
];

/// Writes rows as CSV with a header.
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        let nums = [
            r.fsi,
            r.fsi_std,
            r.n_ctp,
            r.action_abs_sum,
            r.decision_abs_mean,
            r.action_abs_mean,
            r.action_abs_std,
            r.n_decisions,
            r.n_actions,
            r.bunch_fraction,
        ];
        let mut row = vec![r.label.clone(), r.replications.to_string()];
        row.extend(nums.iter().map(f64::to_string));
        row.push(r.bunch_verdict().to_string());
        row.extend(
            [
                r.n_p,
                r.wait_mean_s,
                r.wait_std_s,
                r.ride_mean_s,
                r.ride_std_s,
                r.travel_mean_s,
                r.travel_std_s,
            ]
            .iter()
            .map(f64::to_string),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
