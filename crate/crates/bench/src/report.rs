//! The experiment report: a serde tree in which every row records the stage
//! and seed that produced it.

use harlab::classifiers::{ModelFamily, ModelSpec};
use harlab::stats::TestMethod;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::Stage;

pub const REPORT_FORMAT: &str = "harlab-report";
pub const REPORT_VERSION: u32 = 1;

/// Stage and stage seed behind a row of the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub stage: Stage,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore: Option<ExploreSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_search: Option<Vec<GridSummary>>,
    pub best_specs: Vec<BestSpecEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_sweep: Option<Vec<SweepPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub welch: Option<PairMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv52: Option<PairMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_sweep: Option<Vec<HiddenPoint>>,
}

impl ExperimentReport {
    /// Canonical pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let report: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if report.format != REPORT_FORMAT || report.version != REPORT_VERSION {
            return Err(format!(
                "not a {REPORT_FORMAT} v{REPORT_VERSION} file (found {:?} v{})",
                report.format, report.version
            ));
        }
        Ok(report)
    }

    pub fn best_spec(&self, family: ModelFamily) -> Option<&ModelSpec> {
        self.best_specs.iter().find(|b| b.family == family).map(|b| &b.spec)
    }

    pub fn model_evaluation(&self, family: ModelFamily) -> Option<&ModelEvaluation> {
        self.evaluation.as_ref()?.models.iter().find(|m| m.family == family)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub os: String,
    pub arch: String,
    pub master_seed: u64,
    pub config_sha256: String,
    pub dataset: DatasetSummary,
    /// Stages in the order they ran, with their seeds.
    pub stages: Vec<Origin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub train_rows: usize,
    pub test_rows: usize,
    pub features: usize,
    /// SHA-256 of both splits in their binary cache encoding.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: u8,
    pub name: String,
    pub train: usize,
    pub test: usize,
    #[serde(flatten)]
    pub origin: Origin,
}

/// Summary of one feature over a group of training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    #[serde(flatten)]
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreSummary {
    pub class_counts: Vec<ClassCount>,
    pub train_total: usize,
    pub test_total: usize,
    pub magnitude_feature: String,
    pub magnitude_feature_index: usize,
    /// `static` and `dynamic` first, then one row per activity.
    pub magnitude: Vec<GroupSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub family: ModelFamily,
    pub combinations: usize,
    pub folds: usize,
    pub plan_fingerprint: String,
    pub best_index: usize,
    pub best_params: Map<String, Value>,
    pub best_mean_accuracy: f64,
    pub best_std_accuracy: f64,
    pub failed_combinations: usize,
    /// Full table, relative to the run directory.
    pub table_csv: String,
    #[serde(flatten)]
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpecSource {
    Config,
    GridSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSpecEntry {
    pub family: ModelFamily,
    pub source: SpecSource,
    pub description: String,
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub requested_k: usize,
    /// `requested_k` capped at the dataset width.
    pub k: usize,
    pub family: ModelFamily,
    pub accuracy: f64,
    pub converged: bool,
    #[serde(flatten)]
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Test rows of the class summed over the subsamples.
    pub support: u64,
    /// Some subsample had a zero denominator for this class.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub family: ModelFamily,
    pub full_test_accuracy: f64,
    pub subsample_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation of `subsample_accuracies`.
    pub std_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<Vec<ClassScore>>,
    /// Accuracies on the Welch subsamples.
    pub welch_scores: Vec<f64>,
    pub converged: bool,
    pub model_file: String,
    #[serde(flatten)]
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub subsample_fraction: f64,
    pub table_seeds: Vec<u64>,
    pub welch_seeds: Vec<u64>,
    pub models: Vec<ModelEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCell {
    pub row: ModelFamily,
    pub column: ModelFamily,
    #[serde(with = "real")]
    pub t_value: f64,
    #[serde(with = "real")]
    pub df: f64,
    pub p_value: f64,
    pub reject_null: bool,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub differences: Option<[[f64; 2]; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seeds: Option<[u64; 5]>,
    #[serde(flatten)]
    pub origin: Origin,
}

/// Pairwise tests; the cell at (row, column) tests row against column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMatrix {
    pub method: TestMethod,
    pub alpha: f64,
    pub models: Vec<ModelFamily>,
    pub cells: Vec<PairCell>,
}

impl PairMatrix {
    pub fn cell(&self, row: ModelFamily, column: ModelFamily) -> Option<&PairCell> {
        self.cells.iter().find(|c| c.row == row && c.column == column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenPoint {
    pub depth: usize,
    pub hidden_sizes: Vec<usize>,
    pub accuracy: f64,
    pub epochs: usize,
    pub converged: bool,
    #[serde(flatten)]
    pub origin: Origin,
}

/// Reals that may be infinite, written as `"inf"` / `"-inf"` / `"nan"`.
pub mod real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a real: {other:?}"))),
            },
        }
    }
}
