//! Significance tests for comparing classifiers.

mod cv52;
mod special;
mod welch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv52::{cv52_paired_t_test, cv52_statistic, Cv52Table};
pub use special::{inc_beta, inc_beta_pair, ln_beta, ln_gamma, t_sf, t_two_sided_p};
pub use welch::{welch_t_test, ScoreSample};

use crate::classifiers::ModelError;
use crate::data::DataError;
use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample {model_id:?} has {n} scores; at least 2 are required")]
    TooFewScores { model_id: String, n: usize },
    #[error("sample {model_id:?} contains a non-finite score")]
    NonFiniteScore { model_id: String },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("5x2cv repetition {repetition}: {source}")]
    Data {
        repetition: usize,
        #[source]
        source: DataError,
    },
    #[error("5x2cv repetition {repetition}, fold {fold}: {source}")]
    Fit {
        repetition: usize,
        fold: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Welch,
    Cv52,
}

/// Outcome of a two-sided test of equal means.
///
/// With `degenerate` unset, `reject_null` is exactly `p_value < alpha`.
/// Degenerate results come from zero variance; their statistic is 0 or
/// infinite (serialized as `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    pub t_value: f64,
    pub df: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject_null: bool,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv52_table: Option<Cv52Table>,
}

fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidAlpha(alpha))
    }
}

/// Result for a statistic whose variance estimate is exactly zero: equal
/// means retain the null with p = 1, different means reject with p = 0.
fn degenerate(method: TestMethod, mean_difference: f64, df: f64, alpha: f64) -> TestResult {
    let (t_value, p_value, reject_null) = if mean_difference == 0.0 {
        (0.0, 1.0, false)
    } else {
        (f64::INFINITY.copysign(mean_difference), 0.0, true)
    };
    TestResult {
        method,
        t_value,
        df,
        p_value,
        alpha,
        reject_null,
        degenerate: true,
        cv52_table: None,
    }
}

fn regular(method: TestMethod, t_value: f64, df: f64, alpha: f64) -> TestResult {
    let p_value = t_two_sided_p(t_value, df);
    TestResult {
        method,
        t_value,
        df,
        p_value,
        alpha,
        reject_null: p_value < alpha,
        degenerate: false,
        cv52_table: None,
    }
}
