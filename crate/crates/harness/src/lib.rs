//! Seeded experiment runner: config files in, traces and summaries out.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod verify;

pub use config::{ExperimentConfig, Metric, Overrides, PlannerSpec};
pub use error::{HarnessError, Result};
pub use runner::{run_experiment, run_matrix, run_oracle, run_planner, Outcome, Row};
