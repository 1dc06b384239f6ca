use std::error::Error;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pipeline step that produced an output or an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Data,
    Explore,
    GridSearch,
    SweepFeatures,
    Evaluate,
    Welch,
    Cv52,
    SweepHidden,
    Report,
}

impl Stage {
    pub fn tag(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Explore => "explore",
            Stage::GridSearch => "grid-search",
            Stage::SweepFeatures => "sweep-features",
            Stage::Evaluate => "evaluate",
            Stage::Welch => "welch",
            Stage::Cv52 => "cv52",
            Stage::SweepHidden => "sweep-hidden",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub type BoxError = Box<dyn Error + Send + Sync + 'static>;

/// A failure tagged with the stage it happened in.
#[derive(Debug, Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: BoxError,
}

impl StageError {
    pub fn new(stage: Stage, source: impl Into<BoxError>) -> Self {
        Self {
            stage,
            source: source.into(),
        }
    }

    /// The message followed by every underlying cause.
    pub fn chain(&self) -> String {
        let mut out = self.to_string();
        let mut cause = self.source.source();
        while let Some(c) = cause {
            out.push_str(&format!(": {c}"));
            cause = c.source();
        }
        out
    }
}

pub trait StageResultExt<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: Into<BoxError>> StageResultExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e))
    }
}
