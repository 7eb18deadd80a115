//! The search loop: sample a batch from the controller, score every candidate
//! in parallel, append the records, update the policy. Also finalization of
//! the best in-window candidates with long training.

mod config;
mod finalize;
mod search;
mod store;

use thiserror::Error;

pub use config::{EnvConfig, FinalizeConfig, RunConfig, SpaceSource, TabularSpec};
pub use finalize::{finalize_top, results_csv, FinalResult};
pub use search::{
    run_search, Environment, Evaluator, RunOptions, RunSummary, METRICS_FILE, POLICY_FILE,
    TRAJECTORY_FILE,
};
pub use store::{RunHeader, Trajectory, TrajectoryStore, TRAJECTORY_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("need {need} in-window candidates, found {got}")]
    InsufficientCandidates { need: usize, got: usize },
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("controller update failed: {0}")]
    Controller(String),
}
