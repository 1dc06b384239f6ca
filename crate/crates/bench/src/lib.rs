//! End-to-end benchmark of the five harlab classifiers on the UCI HAR data.
//!
//! [`run`] executes the enabled stages of an [`ExperimentConfig`] in order
//! (explore, grid search, feature sweep, evaluation, Welch and 5x2cv tests,
//! hidden-layer sweep) and writes a deterministic report into a run directory.

pub mod config;
pub mod error;
pub mod render;
pub mod report;
pub mod run;
pub mod stages;

pub use config::{ExperimentConfig, Protocol, ReportFormat, StageToggles};
pub use error::{Stage, StageError};
pub use report::ExperimentReport;
pub use run::{rerender, run, Manifest, RunOutcome, RunStatus};
