//! The five model families behind one fit/predict contract.
//!
//! Class indices inside every model refer to `TrainedModel::classes`, which is
//! sorted by label code, so "smaller index" and "smaller label" tie-breaks agree.

pub mod forest;
pub mod logreg;
pub mod mlp;
mod spec;
pub mod svm;
pub mod tree;

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use spec::{
    Criterion, ForestParams, KernelKind, LogRegParams, MlpParams, ModelFamily, ModelParams, ModelSpec, Regularizer,
    SvmParams, TreeParams,
};
pub use svm::{fit_svm_binary, kernel_eval, BinarySvm, Kernel};
pub use tree::impurity;

use crate::data::{ActivityLabel, LabeledDataset};
use forest::RandomForest;
use logreg::LogRegModel;
use mlp::{Mlp, TrainingLog};
use svm::SvmModel;
use tree::{grow, majority, DecisionTree, TreeConfig};

pub const MODEL_FORMAT: &str = "harlab-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot fit on an empty dataset")]
    EmptyDataset,
    #[error("training data has {0} class(es); at least 2 are required")]
    TooFewClasses(usize),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input at row {row}, column {column}")]
    NonFiniteInput { row: usize, column: usize },
    #[error("training produced a non-finite {0}")]
    NonFinite(String),
    #[error("{0} models do not produce probabilities")]
    NoProbabilities(ModelFamily),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedState {
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    Svm(SvmModel),
    LogisticRegression(LogRegModel),
    NeuralNet { net: Mlp, training: TrainingLog },
}

/// Solver status. A model that did not converge is still usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub classes: Vec<ActivityLabel>,
    pub n_features: usize,
    pub state: FittedState,
    pub diagnostics: FitDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: TrainedModel,
}

/// Fits `spec` on `ds`. Deterministic in `(spec, ds)`.
pub fn fit(spec: &ModelSpec, ds: &LabeledDataset) -> Result<TrainedModel, ModelError> {
    spec.params.validate()?;
    if ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let classes = ds.classes_present();
    if classes.len() < 2 {
        return Err(ModelError::TooFewClasses(classes.len()));
    }
    let mut position = [usize::MAX; 6];
    for (i, c) in classes.iter().enumerate() {
        position[c.index()] = i;
    }
    let y: Vec<usize> = ds.labels().iter().map(|l| position[l.index()]).collect();
    let x = ds.features();
    let k = classes.len();
    let d = ds.n_features();

    let (state, diagnostics) = match &spec.params {
        ModelParams::DecisionTree(p) => {
            let config = TreeConfig {
                criterion: p.criterion,
                max_depth: p.max_depth,
                features_per_split: None,
            };
            let tree = grow(x, &y, k, (0..y.len()).collect(), &config, None);
            (FittedState::DecisionTree(tree), converged(Vec::new()))
        }
        ModelParams::RandomForest(p) => {
            if let Some(m) = p.features_per_split {
                if m > d {
                    return Err(ModelError::InvalidParams(format!(
                        "features_per_split {m} exceeds the {d} available features"
                    )));
                }
            }
            let forest = forest::fit_forest(x, &y, k, p, spec.seed);
            (FittedState::RandomForest(forest), converged(Vec::new()))
        }
        ModelParams::Svm(p) => {
            let model = svm::fit_ovo(x, &y, k, p);
            let finite = model.pairs.iter().all(|m| m.bias.is_finite() && m.coef.iter().all(|c| c.is_finite()));
            if !finite {
                return Err(ModelError::NonFinite("SVM dual solution".into()));
            }
            let notes = model
                .pairs
                .iter()
                .filter(|m| !m.converged)
                .map(|m| {
                    format!(
                        "pair ({}, {}) stopped after {} iterations without reaching tolerance",
                        classes[m.class_a], classes[m.class_b], m.iterations
                    )
                })
                .collect();
            (FittedState::Svm(model), converged(notes))
        }
        ModelParams::LogisticRegression(p) => {
            let model = logreg::fit_ovr(x, &y, k, p);
            let finite = model.models.iter().all(|m| m.intercept.is_finite() && m.weights.iter().all(|w| w.is_finite()));
            if !finite {
                return Err(ModelError::NonFinite("logistic regression weight".into()));
            }
            let notes = model
                .models
                .iter()
                .enumerate()
                .filter(|(_, m)| !m.converged)
                .map(|(i, m)| format!("binary model {i} stopped after {} iterations", m.iterations))
                .collect();
            (FittedState::LogisticRegression(model), converged(notes))
        }
        ModelParams::NeuralNet(p) => {
            let (net, training) = mlp::fit_mlp(x, &y, k, p, spec.seed);
            let finite = net
                .layers
                .iter()
                .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()));
            if !finite {
                return Err(ModelError::NonFinite("network weight".into()));
            }
            let notes = if training.converged {
                Vec::new()
            } else {
                vec![format!("loss still improving after {} epochs", training.epochs)]
            };
            (FittedState::NeuralNet { net, training }, converged(notes))
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        classes,
        n_features: d,
        state,
        diagnostics,
    })
}

fn converged(notes: Vec<String>) -> FitDiagnostics {
    FitDiagnostics {
        converged: notes.is_empty(),
        notes,
    }
}

fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.outer_iter()
        .map(|row| majority(row.as_slice().expect("standard layout")))
        .collect()
}

impl TrainedModel {
    pub fn family(&self) -> ModelFamily {
        self.spec.family()
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<(), ModelError> {
        if x.ncols() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        for ((row, column), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteInput { row, column });
            }
        }
        Ok(())
    }

    /// Predicted class indices into `self.classes`.
    pub fn predict_indices(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>, ModelError> {
        self.check_input(x)?;
        let k = self.classes.len();
        Ok(match &self.state {
            FittedState::DecisionTree(tree) => x.outer_iter().map(|r| tree.predict_row(r)).collect(),
            FittedState::RandomForest(forest) => forest.predict(x, k),
            FittedState::Svm(model) => x.outer_iter().map(|r| model.predict_row(r)).collect(),
            FittedState::LogisticRegression(_) | FittedState::NeuralNet { .. } => argmax_rows(&self.probabilities(x)),
        })
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<ActivityLabel>, ModelError> {
        Ok(self
            .predict_indices(x)?
            .into_iter()
            .map(|i| self.classes[i])
            .collect())
    }

    fn probabilities(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let x = x.as_standard_layout();
        match &self.state {
            FittedState::RandomForest(forest) => forest.vote_fractions(x.view(), self.classes.len()),
            FittedState::LogisticRegression(model) => model.probabilities(x.view()),
            FittedState::NeuralNet { net, .. } => net.probabilities(x.view()),
            FittedState::DecisionTree(_) | FittedState::Svm(_) => unreachable!("checked by caller"),
        }
    }

    /// Row-stochastic class probabilities, columns in `self.classes` order.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ModelError> {
        if !self.family().has_probabilities() {
            return Err(ModelError::NoProbabilities(self.family()));
        }
        self.check_input(x)?;
        Ok(self.probabilities(x))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&file).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        match (value.get("format").and_then(|v| v.as_str()), value.get("version").and_then(|v| v.as_u64())) {
            (Some(MODEL_FORMAT), Some(v)) if v == MODEL_VERSION as u64 => {}
            (Some(MODEL_FORMAT), v) => {
                return Err(ModelError::Format(format!("unsupported version {v:?}, expected {MODEL_VERSION}")))
            }
            _ => return Err(ModelError::Format(format!("not a {MODEL_FORMAT} file"))),
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| ModelError::Format(e.to_string()))?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}
