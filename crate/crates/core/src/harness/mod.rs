//! Verification harness: bounded exhaustive checks, seeded stochastic runs,
//! live concurrent races and partial-atomicity classification.

pub mod live;
pub mod partial;
pub mod report;
pub mod stochastic;
pub mod theorem;

use thiserror::Error;

use crate::explore::ExploreError;
use crate::scenario::ScenarioError;

pub use live::{run_live_race, LiveConfig, DEFAULT_PAUSE};
pub use partial::{classify_partial_atomicity, project_admissibility, AtomicityClass, Classification};
pub use report::{render_report, render_stats, Outcome, ReportMode, ViolationStats, WitnessReport};
pub use stochastic::{run_stochastic, validate_probability, StochasticConfig};
pub use theorem::{verify_escalation_closure, verify_external_state, verify_theorem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("scenario `{0}` declares no partition and none was given")]
    MissingPartition(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
}
