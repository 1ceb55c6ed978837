//! Speed-regulation policies queried at bus departures.

mod rollout;

use serde::{Deserialize, Serialize};

pub use rollout::{
    delta_travel_time, expected_dwell, expected_intersection_delay, ExpectedTimes, Rollout,
    RolloutBus, RolloutState, Traverse,
};

use crate::error::{Error, Result};
use crate::model::Line;
use crate::sim::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerSpec {
    None,
    Lookahead { depth: usize, gamma: f64 },
}

impl ControllerSpec {
    pub fn build(&self, line: &Line) -> Result<Box<dyn Controller>> {
        Ok(match *self {
            ControllerSpec::None => Box::new(NullController),
            ControllerSpec::Lookahead { depth, gamma } => {
                Box::new(LookaheadController::new(line, depth, gamma)?)
            }
        })
    }
}

pub trait Controller: Send + Sync {
    /// Regulating speed for the departing bus's next segment.
    fn decide(&self, snapshot: &Snapshot<'_>) -> Result<f64>;
}

/// Never regulates.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullController;

impl Controller for NullController {
    fn decide(&self, _snapshot: &Snapshot<'_>) -> Result<f64> {
        Ok(0.0)
    }
}

/// Rolls an expected-value copy of the line forward over the next `depth`
/// departures and picks the regulating speed with the lowest discounted sum
/// of headway-imbalance costs.
#[derive(Debug, Clone)]
pub struct LookaheadController {
    depth: usize,
    gamma: f64,
    mean_board_s: f64,
    expected: ExpectedTimes,
}

pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_GAMMA: f64 = 0.5;

impl LookaheadController {
    pub fn new(line: &Line, depth: usize, gamma: f64) -> Result<Self> {
        if depth == 0 || !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Controller {
                time: 0.0,
                bus: 0,
                reason: format!("look-ahead needs depth >= 1 and gamma in (0, 1], got {depth} and {gamma}"),
            });
        }
        let mean_board_s = line.mean_board_s();
        for stop in &line.stops {
            let load = stop.rate_per_s * mean_board_s;
            if load >= 1.0 {
                return Err(Error::UnstableStop { stop: stop.id, load });
            }
        }
        Ok(Self {
            depth,
            gamma,
            mean_board_s,
            expected: ExpectedTimes::new(line),
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rollout<'a>(&'a self, line: &'a Line, controlled: &'a [bool]) -> Rollout<'a> {
        Rollout {
            line,
            controlled,
            expected: &self.expected,
            mean_board_s: self.mean_board_s,
        }
    }
}

impl Controller for LookaheadController {
    fn decide(&self, snapshot: &Snapshot<'_>) -> Result<f64> {
        let rollout = self.rollout(snapshot.line, snapshot.controlled);
        let state = rollout.build_state(snapshot)?;
        rollout
            .select_action(&state, self.depth, self.gamma)
            .map_err(|e| match e {
                Error::Controller { bus, reason, .. } => Error::Controller {
                    time: snapshot.now_s,
                    bus,
                    reason,
                },
                other => Error::Controller {
                    time: snapshot.now_s,
                    bus: snapshot.line.buses[snapshot.bus].id,
                    reason: other.to_string(),
                },
            })
    }
}
