use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("scenario failed validation with {} violation(s)", .0.len())]
    Validation(Vec<Violation>),

    #[error("unknown bus line segment {0}")]
    UnknownSegment(u32),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("bus line segment {0} is not eligible for a dedicated bus lane")]
    NotEligible(u32),

    #[error("regulating speed {action} km/h is not admissible on a lane with base speed {base} km/h")]
    InadmissibleAction { action: f64, base: f64 },

    #[error("stop {stop} is unstable: arrival rate times mean boarding time is {load} >= 1")]
    UnstableStop { stop: u32, load: f64 },

    #[error("arrival rate times mean boarding time is {0} >= 1; the dwell estimate diverges")]
    UnstableLoad(f64),

    #[error("controller failed at t={time:.3}s for bus {bus}: {reason}")]
    Controller { time: f64, bus: u32, reason: String },

    #[error("{0} requires a non-empty input")]
    EmptyInput(&'static str),

    #[error("{what} requires at least {min} values, got {got}")]
    TooShort {
        what: &'static str,
        min: usize,
        got: usize,
    },

    #[error("no deployment pattern satisfies the constraints")]
    Infeasible,

    #[error("candidate set has {0} locations; exhaustive enumeration is limited to 20")]
    TooManyLocations(usize),

    #[error("bus line segment {0} has no influence/money cost data")]
    MissingCost(u32),

    #[error("replication {replication} failed: {source}")]
    Replication {
        replication: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
