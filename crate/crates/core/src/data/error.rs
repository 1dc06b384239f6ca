use std::path::PathBuf;

use thiserror::Error;

use super::ActivityLabel;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file: {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("{}:{line}: expected {expected} columns, found {found}", path.display())]
    ColumnCount {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{}:{line}: cannot parse {token:?} as a number", path.display())]
    ParseNumber {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{}:{line}: label {value} outside 1..=6", path.display())]
    LabelOutOfRange { path: PathBuf, line: usize, value: i64 },
    #[error("{}:{line}: subject id {value} outside 1..=30", path.display())]
    SubjectOutOfRange { path: PathBuf, line: usize, value: i64 },
    #[error("{}:{line}: column {column} value {value} outside [-1, 1]", path.display())]
    OutOfUnitRange {
        path: PathBuf,
        line: usize,
        column: usize,
        value: f64,
    },
    #[error("{}:{line}: non-finite value in column {column}", path.display())]
    NonFiniteInFile { path: PathBuf, line: usize, column: usize },
    #[error("{what}: expected {expected} rows, found {found}")]
    RowCountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite feature at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("subject id {value} at row {row} outside 1..=30")]
    InvalidSubject { row: usize, value: u16 },
    #[error("dataset is empty")]
    Empty,
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("feature index {index} out of range for {n_features} features")]
    FeatureIndex { index: usize, n_features: usize },
    #[error("class {label} has {count} rows but at least {required} are needed")]
    ClassTooSmall {
        label: ActivityLabel,
        count: usize,
        required: usize,
    },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("cache {}: {reason}", path.display())]
    Cache { path: PathBuf, reason: String },
}
