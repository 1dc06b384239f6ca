use std::ops::Deref;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::{ActivityLabel, DataError};

pub const MAX_SUBJECT: u16 = 30;

/// Feature matrix with one activity label and one volunteer id per row.
///
/// All rows are validated at construction: lengths agree, every feature is
/// finite and every subject id lies in `1..=30`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<ActivityLabel>,
    subjects: Vec<u16>,
    feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<ActivityLabel>,
        subjects: Vec<u16>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let (n, d) = features.dim();
        if labels.len() != n {
            return Err(DataError::RowCountMismatch {
                what: "labels",
                expected: n,
                found: labels.len(),
            });
        }
        if subjects.len() != n {
            return Err(DataError::RowCountMismatch {
                what: "subjects",
                expected: n,
                found: subjects.len(),
            });
        }
        if feature_names.len() != d {
            return Err(DataError::DimensionMismatch {
                expected: d,
                found: feature_names.len(),
            });
        }
        for (row, values) in features.outer_iter().enumerate() {
            if let Some(column) = values.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row, column });
            }
        }
        if let Some((row, &value)) = subjects
            .iter()
            .enumerate()
            .find(|(_, &s)| s == 0 || s > MAX_SUBJECT)
        {
            return Err(DataError::InvalidSubject { row, value });
        }
        Ok(Self {
            features,
            labels,
            subjects,
            feature_names,
        })
    }

    /// Dataset with generated feature names `f0, f1, ...` and every subject set to 1.
    pub fn from_parts(features: Array2<f64>, labels: Vec<ActivityLabel>) -> Result<Self, DataError> {
        let names = (0..features.ncols()).map(|j| format!("f{j}")).collect();
        let subjects = vec![1; features.nrows()];
        Self::new(features, labels, subjects, names)
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[ActivityLabel] {
        &self.labels
    }

    pub fn subjects(&self) -> &[u16] {
        &self.subjects
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Row counts per activity, indexed by [`ActivityLabel::index`].
    pub fn class_counts(&self) -> [usize; 6] {
        let mut counts = [0; 6];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    /// Labels that occur at least once, in code order.
    pub fn classes_present(&self) -> Vec<ActivityLabel> {
        let counts = self.class_counts();
        ActivityLabel::ALL
            .into_iter()
            .filter(|l| counts[l.index()] > 0)
            .collect()
    }

    /// Row indices of each activity, in ascending row order.
    pub fn indices_by_class(&self) -> [Vec<usize>; 6] {
        let mut out: [Vec<usize>; 6] = Default::default();
        for (i, l) in self.labels.iter().enumerate() {
            out[l.index()].push(i);
        }
        out
    }

    /// New dataset holding `rows` in the given order. Panics on an out-of-range index.
    pub fn subset(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            subjects: rows.iter().map(|&i| self.subjects[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Keep only the listed feature columns, in the listed order.
    pub fn select_features(&self, columns: &[usize]) -> Result<LabeledDataset, DataError> {
        let d = self.n_features();
        if let Some(&index) = columns.iter().find(|&&c| c >= d) {
            return Err(DataError::FeatureIndex { index, n_features: d });
        }
        Ok(LabeledDataset {
            features: self.features.select(Axis(1), columns),
            labels: self.labels.clone(),
            subjects: self.subjects.clone(),
            feature_names: columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
        })
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset, DataError> {
        if other.n_features() != self.n_features() {
            return Err(DataError::DimensionMismatch {
                expected: self.n_features(),
                found: other.n_features(),
            });
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("column counts checked");
        Ok(LabeledDataset {
            features,
            labels: self.labels.iter().chain(&other.labels).copied().collect(),
            subjects: self.subjects.iter().chain(&other.subjects).copied().collect(),
            feature_names: self.feature_names.clone(),
        })
    }
}

/// The publisher's training split. Model selection only ever accepts this type.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSplit(LabeledDataset);

/// The held-out split, consumed only by evaluation stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSplit(LabeledDataset);

impl TrainSplit {
    pub fn new(ds: LabeledDataset) -> Self {
        Self(ds)
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.0
    }

    pub fn into_inner(self) -> LabeledDataset {
        self.0
    }
}

impl TestSplit {
    pub fn new(ds: LabeledDataset) -> Self {
        Self(ds)
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.0
    }

    pub fn into_inner(self) -> LabeledDataset {
        self.0
    }
}

impl Deref for TrainSplit {
    type Target = LabeledDataset;
    fn deref(&self) -> &LabeledDataset {
        &self.0
    }
}

impl Deref for TestSplit {
    type Target = LabeledDataset;
    fn deref(&self) -> &LabeledDataset {
        &self.0
    }
}
