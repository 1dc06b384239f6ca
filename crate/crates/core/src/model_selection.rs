//! Stratified k-fold cross-validation and exhaustive grid search.
//!
//! Every combination of a grid is scored on the same fold plan, so the
//! per-fold accuracies of two rows are paired. Failed fits score 0 and carry a
//! flag instead of aborting the search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::classifiers::{fit, ModelError, ModelFamily, ModelParams, ModelSpec};
use crate::data::{stratified_kfold, DataError, FoldPlan, LabeledDataset, TrainSplit};
use crate::metrics::{accuracy_of, MetricsError};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("fold plan covers {plan_rows} rows but the dataset has {dataset_rows}")]
    PlanMismatch { plan_rows: usize, dataset_rows: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ModelError,
    },
    #[error("fold {fold}: {source}")]
    Metrics {
        fold: usize,
        #[source]
        source: MetricsError,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// One named hyperparameter and its candidate values, as they appear in a
/// serialized [`ModelSpec`] (`null` for an unbounded depth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<Value>,
}

impl GridAxis {
    pub fn new(name: &str, values: Vec<Value>) -> Self {
        Self {
            name: name.to_string(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    /// Parameters shared by every combination; axes override its fields.
    pub base: ModelSpec,
    pub axes: Vec<GridAxis>,
}

fn reals(values: &[f64]) -> Vec<Value> {
    values.iter().map(|&v| json!(v)).collect()
}

impl ParamGrid {
    pub fn new(base: ModelSpec, axes: Vec<GridAxis>) -> Result<Self, SelectionError> {
        let grid = Self { base, axes };
        grid.combinations()?;
        Ok(grid)
    }

    pub fn family(&self) -> ModelFamily {
        self.base.family()
    }

    /// The published search space of each family. A listed depth of 0 is
    /// read as "unbounded".
    pub fn default_for(family: ModelFamily, seed: u64) -> Self {
        let depths = vec![Value::Null, json!(2), json!(4), json!(6), json!(8)];
        let criteria = vec![json!("gini"), json!("entropy")];
        let penalties = reals(&[0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]);
        let axes = match family {
            ModelFamily::DecisionTree => vec![GridAxis::new("criterion", criteria), GridAxis::new("max_depth", depths)],
            ModelFamily::RandomForest => vec![
                GridAxis::new("criterion", criteria),
                GridAxis::new("n_estimators", [10, 30, 60, 90, 120, 150].iter().map(|&n| json!(n)).collect()),
                GridAxis::new("max_depth", depths),
            ],
            ModelFamily::Svm => vec![
                GridAxis::new("kernel", vec![json!("linear"), json!("rbf"), json!("sigmoid")]),
                GridAxis::new("c", penalties),
            ],
            ModelFamily::NeuralNet => vec![
                GridAxis::new("hidden_sizes", vec![json!([10]), json!([50]), json!([100])]),
                GridAxis::new("alpha", reals(&[1e-4, 1e-3, 1e-2])),
                GridAxis::new("learning_rate", reals(&[1e-3, 1e-2, 1e-1])),
                GridAxis::new("beta1", reals(&[0.1, 0.5, 0.9])),
                GridAxis::new("beta2", reals(&[0.1, 0.5, 0.9])),
            ],
            ModelFamily::LogisticRegression => vec![
                GridAxis::new("regularizer", vec![json!("l1"), json!("l2")]),
                GridAxis::new("c", penalties),
            ],
        };
        let base = ModelSpec {
            params: ModelParams::default_for(family),
            seed,
        };
        Self { base, axes }
    }

    pub fn cardinality(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Axis values of combination `index` in row-major order (last axis fastest).
    pub fn assignment(&self, index: usize) -> Map<String, Value> {
        let mut rest = index;
        let mut picks = vec![0; self.axes.len()];
        for (slot, axis) in picks.iter_mut().zip(&self.axes).rev() {
            *slot = rest % axis.values.len();
            rest /= axis.values.len();
        }
        self.axes
            .iter()
            .zip(picks)
            .map(|(axis, i)| (axis.name.clone(), axis.values[i].clone()))
            .collect()
    }

    /// Every combination as a validated spec, in row-major order.
    pub fn combinations(&self) -> Result<Vec<ModelSpec>, SelectionError> {
        if self.axes.is_empty() {
            return Ok(vec![self.base.clone()]);
        }
        if let Some(axis) = self.axes.iter().find(|a| a.values.is_empty()) {
            return Err(SelectionError::InvalidGrid(format!("axis {:?} has no values", axis.name)));
        }
        let base = serde_json::to_value(&self.base).expect("specs serialize");
        (0..self.cardinality())
            .map(|index| {
                let mut value = base.clone();
                let object = value.as_object_mut().expect("spec is an object");
                for (name, v) in self.assignment(index) {
                    if name == "family" || name == "seed" || !object.contains_key(&name) {
                        return Err(SelectionError::InvalidGrid(format!("unknown parameter {name:?}")));
                    }
                    object.insert(name, v);
                }
                let spec: ModelSpec = serde_json::from_value(value)
                    .map_err(|e| SelectionError::InvalidGrid(format!("combination {index}: {e}")))?;
                spec.params
                    .validate()
                    .map_err(|e| SelectionError::InvalidGrid(format!("combination {index}: {e}")))?;
                Ok(spec)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub accuracy: f64,
    pub converged: bool,
    /// Set when the fit failed; the fold then scores 0.
    pub error: Option<String>,
}

fn evaluate_fold(spec: &ModelSpec, ds: &LabeledDataset, plan: &FoldPlan, fold: usize) -> Result<(f64, bool), SelectionError> {
    let train = ds.subset(&plan.train_indices(fold));
    let test = ds.subset(&plan.test_indices(fold));
    let model = fit(spec, &train).map_err(|source| SelectionError::Fold { fold, source })?;
    let predicted = model
        .predict(test.features())
        .map_err(|source| SelectionError::Fold { fold, source })?;
    let accuracy = accuracy_of(test.labels(), &predicted).map_err(|source| SelectionError::Metrics { fold, source })?;
    Ok((accuracy, model.diagnostics.converged))
}

fn check_plan(ds: &LabeledDataset, plan: &FoldPlan) -> Result<(), SelectionError> {
    if plan.n_rows() != ds.n_rows() {
        return Err(SelectionError::PlanMismatch {
            plan_rows: plan.n_rows(),
            dataset_rows: ds.n_rows(),
        });
    }
    Ok(())
}

/// Accuracy of each fold when fitting on the other folds.
pub fn cross_val_accuracy(spec: &ModelSpec, ds: &LabeledDataset, plan: &FoldPlan) -> Result<Vec<f64>, SelectionError> {
    check_plan(ds, plan)?;
    (0..plan.k)
        .into_par_iter()
        .map(|fold| evaluate_fold(spec, ds, plan, fold).map(|(a, _)| a))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub params: Map<String, Value>,
    pub spec: ModelSpec,
    pub folds: Vec<FoldOutcome>,
    pub mean_accuracy: f64,
    /// Population standard deviation of the fold accuracies.
    pub std_accuracy: f64,
    pub plan_fingerprint: String,
}

impl GridRow {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    pub fn failed(&self) -> bool {
        self.folds.iter().any(|f| f.error.is_some())
    }

    pub fn converged(&self) -> bool {
        self.folds.iter().all(|f| f.converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub family: ModelFamily,
    pub k: usize,
    pub seed: u64,
    pub plan_fingerprint: String,
    pub best_index: usize,
    pub best_spec: ModelSpec,
    pub best_mean_accuracy: f64,
    pub table: Vec<GridRow>,
}

/// Scores every combination of `grid` by k-fold accuracy on one shared plan.
/// The best row is the highest mean; ties go to the earliest combination.
/// Only the training split is accepted.
pub fn grid_search(grid: &ParamGrid, train: &TrainSplit, k: usize, seed: u64) -> Result<GridSearchResult, SelectionError> {
    let ds = train.dataset();
    let plan = stratified_kfold(ds, k, seed)?;
    let specs = grid.combinations()?;
    let units: Vec<(usize, usize)> = (0..specs.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let outcomes: Vec<FoldOutcome> = units
        .par_iter()
        .map(|&(c, fold)| match evaluate_fold(&specs[c], ds, &plan, fold) {
            Ok((accuracy, converged)) if accuracy.is_finite() => FoldOutcome {
                accuracy,
                converged,
                error: None,
            },
            Ok(_) => FoldOutcome {
                accuracy: 0.0,
                converged: false,
                error: Some("non-finite accuracy".into()),
            },
            Err(e) => FoldOutcome {
                accuracy: 0.0,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let fingerprint = plan.fingerprint();
    let table: Vec<GridRow> = specs
        .into_iter()
        .zip(outcomes.chunks_exact(k))
        .enumerate()
        .map(|(index, (spec, folds))| {
            let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
            let mean = accs.iter().sum::<f64>() / k as f64;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64;
            GridRow {
                index,
                params: grid.assignment(index),
                spec,
                folds: folds.to_vec(),
                mean_accuracy: mean,
                std_accuracy: var.sqrt(),
                plan_fingerprint: fingerprint.clone(),
            }
        })
        .collect();
    let best = table.iter().fold(&table[0], |best, row| {
        if row.mean_accuracy > best.mean_accuracy {
            row
        } else {
            best
        }
    });
    Ok(GridSearchResult {
        family: grid.family(),
        k,
        seed,
        plan_fingerprint: fingerprint,
        best_index: best.index,
        best_spec: best.spec.clone(),
        best_mean_accuracy: best.mean_accuracy,
        table,
    })
}

fn csv_field(v: &Value) -> String {
    let text = match v {
        Value::Null => "none".to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(csv_field).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    };
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text
    }
}

impl GridSearchResult {
    /// One row per combination: axis values, fold accuracies, mean, std, flags.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header = vec!["index".to_string()];
        if let Some(row) = self.table.first() {
            header.extend(row.params.keys().cloned());
        }
        header.extend((1..=self.k).map(|f| format!("fold_{f}")));
        header.extend(["mean_accuracy", "std_accuracy", "failed", "converged", "plan_fingerprint"].map(String::from));
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.table {
            let mut fields = vec![row.index.to_string()];
            fields.extend(row.params.values().map(csv_field));
            fields.extend(row.folds.iter().map(|f| f.accuracy.to_string()));
            fields.push(row.mean_accuracy.to_string());
            fields.push(row.std_accuracy.to_string());
            fields.push(row.failed().to_string());
            fields.push(row.converged().to_string());
            fields.push(row.plan_fingerprint.clone());
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    /// The winning spec as a standalone fragment for the evaluation stage.
    pub fn best_fragment(&self) -> Value {
        serde_json::to_value(&self.best_spec).expect("specs serialize")
    }
}
