//! Experiment configuration, runners, and independent reference solutions
//! for the `bmac-core` solvers.

pub mod config;
pub mod experiments;
pub mod oracles;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Core(#[from] bmac_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub use config::{ExperimentConfig, ExperimentKind, OrderChoice, Overrides, SolverKind};
pub use experiments::{run_experiment, Artifact};
