//! Simulation, speed control and lane-deployment optimization for a circular
//! bus line with dedicated bus lanes.

pub mod controller;
pub mod error;
pub mod headway;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod reference;
pub mod report;
pub mod sim;

pub use controller::{Controller, ControllerSpec, LookaheadController, NullController};
pub use error::{Error, Result};
pub use model::{constraint_check, ConstraintCheck, ConstraintSpec, DeploymentPattern, Line, LineConfig};
pub use optimizer::{branch_and_bound, enumerate_oracle, Evaluator, MonteCarloEvaluator, Problem, SearchResult};
pub use sim::{run_simulation, ReplicationSeed, SimOutcome};
