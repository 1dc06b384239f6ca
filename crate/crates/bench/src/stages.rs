//! The individual pipeline stages. Each is a function of the config, the
//! loaded splits and earlier stage outputs.

use std::fs;

use harlab::classifiers::{fit, FittedState, ModelFamily, ModelParams, ModelSpec, TrainedModel};
use harlab::data::{
    encode_cache, load_har_root, stratified_kfold, stratified_subsample_indices, ActivityLabel, FoldPlan, LabeledDataset,
    TestSplit, TrainSplit,
};
use harlab::feature_select::{anova_f_scores, select_top_k, FeatureScore};
use harlab::metrics::{accuracy_of, confusion_matrix, ClassReport};
use harlab::model_selection::{grid_search, GridSearchResult};
use harlab::rng::derive_seed;
use harlab::stats::{cv52_paired_t_test, cv52_statistic, welch_t_test, ScoreSample, TestResult};
use log::info;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::error::{Stage, StageError, StageResultExt};
use crate::report::{
    ClassCount, ClassScore, DatasetSummary, Evaluation, ExploreSummary, GroupSummary, HiddenPoint, ModelEvaluation,
    Origin, PairCell, PairMatrix, SweepPoint,
};

pub struct Splits {
    pub train: TrainSplit,
    pub test: TestSplit,
}

impl Splits {
    pub fn summary(&self) -> DatasetSummary {
        let (train, test) = (self.train.dataset(), self.test.dataset());
        let mut h = Sha256::new();
        h.update(encode_cache(train));
        h.update(encode_cache(test));
        DatasetSummary {
            train_rows: train.n_rows(),
            test_rows: test.n_rows(),
            features: train.n_features(),
            sha256: hex(&h.finalize()),
        }
    }
}

fn origin(config: &ExperimentConfig, stage: Stage) -> Origin {
    Origin {
        stage,
        seed: config.stage_seed(stage),
    }
}

/// Checks the configured checksums, then reads `<data>/train` and `<data>/test`.
pub fn load_data(config: &ExperimentConfig) -> Result<Splits, StageError> {
    for (file, expected) in &config.checksums {
        let path = config.data.join(file);
        let bytes = fs::read(&path).map_err(|e| StageError::new(Stage::Data, format!("{}: {e}", path.display())))?;
        let actual = hex(&Sha256::digest(&bytes));
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(StageError::new(
                Stage::Data,
                format!("checksum mismatch for {}: expected {expected}, found {actual}", path.display()),
            ));
        }
    }
    let (train, test) = load_har_root(&config.data).stage(Stage::Data)?;
    info!(
        "loaded {} train and {} test rows with {} features",
        train.dataset().n_rows(),
        test.dataset().n_rows(),
        train.dataset().n_features()
    );
    Ok(Splits { train, test })
}

fn summarize(group: &str, values: &[f64], origin: Origin) -> GroupSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    GroupSummary {
        group: group.to_string(),
        n,
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        origin,
    }
}

/// Class counts of both splits and the magnitude feature per activity group.
pub fn explore(config: &ExperimentConfig, splits: &Splits) -> Result<ExploreSummary, StageError> {
    let o = origin(config, Stage::Explore);
    let (train, test) = (splits.train.dataset(), splits.test.dataset());
    let (tc, sc) = (train.class_counts(), test.class_counts());
    let class_counts = ActivityLabel::ALL
        .iter()
        .map(|&l| ClassCount {
            class: l.code(),
            name: l.name().to_string(),
            train: tc[l.index()],
            test: sc[l.index()],
            origin: o,
        })
        .collect();

    let name = &config.protocol.magnitude_feature;
    let j = train
        .feature_names()
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| StageError::new(Stage::Explore, format!("feature {name:?} not found in the dataset")))?;
    let features = train.features();
    let column = features.column(j);
    let values_where = |keep: &dyn Fn(ActivityLabel) -> bool| -> Vec<f64> {
        train
            .labels()
            .iter()
            .zip(column.iter())
            .filter(|(l, _)| keep(**l))
            .map(|(_, &v)| v)
            .collect()
    };
    let mut magnitude = vec![
        summarize("static", &values_where(&|l| !l.is_dynamic()), o),
        summarize("dynamic", &values_where(&|l| l.is_dynamic()), o),
    ];
    for label in ActivityLabel::ALL {
        let values = values_where(&|l| l == label);
        if !values.is_empty() {
            magnitude.push(summarize(label.name(), &values, o));
        }
    }
    Ok(ExploreSummary {
        class_counts,
        train_total: train.n_rows(),
        test_total: test.n_rows(),
        magnitude_feature: name.clone(),
        magnitude_feature_index: j,
        magnitude,
    })
}

/// The fold plan shared by every grid search of the run.
pub fn grid_plan(config: &ExperimentConfig, splits: &Splits) -> Result<FoldPlan, StageError> {
    let seed = grid_plan_seed(config);
    stratified_kfold(splits.train.dataset(), config.protocol.folds, seed).stage(Stage::GridSearch)
}

fn grid_plan_seed(config: &ExperimentConfig) -> u64 {
    derive_seed(config.stage_seed(Stage::GridSearch), "folds", 0)
}

/// Exhaustive search for each of the five families on the training split.
pub fn grid_search_all(config: &ExperimentConfig, splits: &Splits) -> Result<Vec<GridSearchResult>, StageError> {
    let seed = grid_plan_seed(config);
    ModelFamily::ALL
        .iter()
        .map(|&family| {
            let grid = config.param_grid(family).stage(Stage::GridSearch)?;
            info!("grid search {}: {} combinations", family.short_name(), grid.cardinality());
            grid_search(&grid, &splits.train, config.protocol.folds, seed)
                .map_err(|e| StageError::new(Stage::GridSearch, format!("{}: {e}", family.short_name())))
        })
        .collect()
}

fn test_accuracy(spec: &ModelSpec, train: &LabeledDataset, test: &LabeledDataset) -> Result<(TrainedModel, f64), String> {
    let model = fit(spec, train).map_err(|e| e.to_string())?;
    let predicted = model.predict(test.features()).map_err(|e| e.to_string())?;
    let acc = accuracy_of(test.labels(), &predicted).map_err(|e| e.to_string())?;
    Ok((model, acc))
}

/// Test accuracy of every family on the top-k ANOVA features of the training
/// split, for each k of the feature grid. Selected columns keep their original
/// order, so k equal to the dataset width is the unselected dataset.
pub fn feature_sweep(
    config: &ExperimentConfig,
    specs: &[(ModelFamily, ModelSpec)],
    splits: &Splits,
) -> Result<(Vec<SweepPoint>, Vec<FeatureScore>), StageError> {
    let o = origin(config, Stage::SweepFeatures);
    let (train, test) = (splits.train.dataset(), splits.test.dataset());
    let scores = anova_f_scores(train).stage(Stage::SweepFeatures)?;
    let width = train.n_features();
    let mut ks: Vec<usize> = config.protocol.feature_grid.iter().map(|&k| k.min(width)).collect();
    ks.sort_unstable();
    ks.dedup();

    let units: Vec<(usize, usize)> = ks.iter().flat_map(|&k| (0..specs.len()).map(move |s| (k, s))).collect();
    let outcomes: Vec<(usize, ModelFamily, f64, bool)> = units
        .par_iter()
        .map(|&(k, s)| {
            let (family, spec) = &specs[s];
            let mut columns = select_top_k(&scores, k).map_err(|e| e.to_string())?;
            columns.sort_unstable();
            let tr = train.select_features(&columns).map_err(|e| e.to_string())?;
            let te = test.select_features(&columns).map_err(|e| e.to_string())?;
            let (model, acc) = test_accuracy(spec, &tr, &te).map_err(|e| format!("{} k={k}: {e}", family.short_name()))?;
            Ok((k, *family, acc, model.diagnostics.converged))
        })
        .collect::<Result<_, String>>()
        .stage(Stage::SweepFeatures)?;

    let mut points = Vec::new();
    for &requested_k in &config.protocol.feature_grid {
        let k = requested_k.min(width);
        for &(_, family, accuracy, converged) in outcomes.iter().filter(|u| u.0 == k) {
            points.push(SweepPoint {
                requested_k,
                k,
                family,
                accuracy,
                converged,
                origin: o,
            });
        }
    }
    Ok((points, scores))
}

pub struct EvaluateOutput {
    pub evaluation: Evaluation,
    pub models: Vec<TrainedModel>,
    pub table_rows: Vec<Vec<usize>>,
    pub welch_rows: Vec<Vec<usize>>,
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

fn subset_accuracy(truth: &[ActivityLabel], predicted: &[ActivityLabel], rows: &[usize]) -> Result<f64, String> {
    let t: Vec<ActivityLabel> = rows.iter().map(|&i| truth[i]).collect();
    let p: Vec<ActivityLabel> = rows.iter().map(|&i| predicted[i]).collect();
    accuracy_of(&t, &p).map_err(|e| e.to_string())
}

fn subset_report(truth: &[ActivityLabel], predicted: &[ActivityLabel], rows: &[usize]) -> Result<ClassReport, String> {
    let t: Vec<ActivityLabel> = rows.iter().map(|&i| truth[i]).collect();
    let p: Vec<ActivityLabel> = rows.iter().map(|&i| predicted[i]).collect();
    let cm = confusion_matrix(&t, &p, &ActivityLabel::ALL).map_err(|e| e.to_string())?;
    ClassReport::from_confusion(&cm).map_err(|e| e.to_string())
}

/// Fits every best spec on the whole training split and scores it on the full
/// test split, on the table subsamples and on the Welch subsamples. All models
/// see the same subsamples.
pub fn evaluate(
    config: &ExperimentConfig,
    specs: &[(ModelFamily, ModelSpec)],
    splits: &Splits,
    per_class: bool,
) -> Result<EvaluateOutput, StageError> {
    let o = origin(config, Stage::Evaluate);
    let p = &config.protocol;
    let (train, test) = (splits.train.dataset(), splits.test.dataset());
    let table_seeds: Vec<u64> = (0..p.table_subsamples as u64)
        .map(|j| derive_seed(o.seed, "table-subsample", j))
        .collect();
    let welch_seeds: Vec<u64> = (0..p.welch_subsamples as u64)
        .map(|j| derive_seed(o.seed, "welch-subsample", j))
        .collect();
    let draw = |seeds: &[u64]| -> Result<Vec<Vec<usize>>, StageError> {
        seeds
            .iter()
            .map(|&s| stratified_subsample_indices(test, p.subsample_fraction, s).stage(Stage::Evaluate))
            .collect()
    };
    let table_rows = draw(&table_seeds)?;
    let welch_rows = draw(&welch_seeds)?;

    let fitted: Vec<(TrainedModel, Vec<ActivityLabel>)> = specs
        .par_iter()
        .map(|(family, spec)| {
            let model = fit(spec, train).map_err(|e| format!("{}: {e}", family.short_name()))?;
            let predicted = model
                .predict(test.features())
                .map_err(|e| format!("{}: {e}", family.short_name()))?;
            Ok((model, predicted))
        })
        .collect::<Result<_, String>>()
        .stage(Stage::Evaluate)?;

    let truth = test.labels();
    let mut evaluations = Vec::new();
    for ((family, _), (model, predicted)) in specs.iter().zip(&fitted) {
        let full_test_accuracy = accuracy_of(truth, predicted).stage(Stage::Evaluate)?;
        let subsample_accuracies = table_rows
            .iter()
            .map(|rows| subset_accuracy(truth, predicted, rows))
            .collect::<Result<Vec<_>, _>>()
            .stage(Stage::Evaluate)?;
        let welch_scores = welch_rows
            .iter()
            .map(|rows| subset_accuracy(truth, predicted, rows))
            .collect::<Result<Vec<_>, _>>()
            .stage(Stage::Evaluate)?;
        let per_class = if per_class {
            let reports = table_rows
                .iter()
                .map(|rows| subset_report(truth, predicted, rows))
                .collect::<Result<Vec<_>, _>>()
                .stage(Stage::Evaluate)?;
            let mean = ClassReport::average(&reports).stage(Stage::Evaluate)?;
            Some(
                mean.per_class
                    .iter()
                    .map(|m| ClassScore {
                        class: m.label.code(),
                        precision: m.precision,
                        recall: m.recall,
                        f1: m.f1,
                        support: m.support,
                        undefined: m.precision_undefined || m.recall_undefined || m.f1_undefined,
                    })
                    .collect(),
            )
        } else {
            None
        };
        let mean_accuracy = subsample_accuracies.iter().sum::<f64>() / subsample_accuracies.len() as f64;
        info!(
            "{}: mean subsample accuracy {:.4}, full test {:.4}",
            family.short_name(),
            mean_accuracy,
            full_test_accuracy
        );
        evaluations.push(ModelEvaluation {
            family: *family,
            full_test_accuracy,
            std_accuracy: sample_std(&subsample_accuracies),
            mean_accuracy,
            subsample_accuracies,
            per_class,
            welch_scores,
            converged: model.diagnostics.converged,
            model_file: format!("models/{}.json", family.short_name()),
            origin: o,
        });
    }
    Ok(EvaluateOutput {
        evaluation: Evaluation {
            subsample_fraction: p.subsample_fraction,
            table_seeds,
            welch_seeds,
            models: evaluations,
        },
        models: fitted.into_iter().map(|(m, _)| m).collect(),
        table_rows,
        welch_rows,
    })
}

fn pair_cell(row: ModelFamily, column: ModelFamily, r: &TestResult, origin: Origin) -> PairCell {
    PairCell {
        row,
        column,
        t_value: r.t_value,
        df: r.df,
        p_value: r.p_value,
        reject_null: r.reject_null,
        degenerate: r.degenerate,
        differences: r.cv52_table.as_ref().map(|t| t.differences),
        split_seeds: r.cv52_table.as_ref().map(|t| t.split_seeds),
        origin,
    }
}

/// Welch's test between the Welch-subsample accuracies of every ordered pair
/// of significance models.
pub fn welch_matrix(config: &ExperimentConfig, evaluation: &Evaluation) -> Result<PairMatrix, StageError> {
    let families = config.significance_families().stage(Stage::Welch)?;
    let o = Origin {
        stage: Stage::Welch,
        seed: config.stage_seed(Stage::Evaluate),
    };
    let samples = families
        .iter()
        .map(|&f| {
            evaluation
                .models
                .iter()
                .find(|m| m.family == f)
                .map(|m| ScoreSample::new(f.short_name(), m.welch_scores.clone()))
                .ok_or_else(|| StageError::new(Stage::Welch, format!("{} was not evaluated", f.short_name())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut cells = Vec::new();
    for (a, sa) in families.iter().zip(&samples) {
        for (b, sb) in families.iter().zip(&samples) {
            let r = welch_t_test(sa, sb, config.protocol.alpha).stage(Stage::Welch)?;
            cells.push(pair_cell(*a, *b, &r, o));
        }
    }
    Ok(PairMatrix {
        method: harlab::stats::TestMethod::Welch,
        alpha: config.protocol.alpha,
        models: families,
        cells,
    })
}

/// Seed of the 5x2cv splits for the ordered pair (a, b).
pub fn cv52_pair_seed(config: &ExperimentConfig, a: ModelFamily, b: ModelFamily) -> u64 {
    derive_seed(
        config.stage_seed(Stage::Cv52),
        &format!("{}-{}", a.short_name(), b.short_name()),
        0,
    )
}

/// The 5x2cv paired test for every ordered pair of significance models on the
/// union of both splits. A model compared with itself has an all-zero
/// difference table, so the diagonal is filled without fitting.
pub fn cv52_matrix(
    config: &ExperimentConfig,
    specs: &[(ModelFamily, ModelSpec)],
    splits: &Splits,
) -> Result<PairMatrix, StageError> {
    let families = config.significance_families().stage(Stage::Cv52)?;
    let o = origin(config, Stage::Cv52);
    let alpha = config.protocol.alpha;
    let whole = splits
        .train
        .dataset()
        .concat(splits.test.dataset())
        .stage(Stage::Cv52)?;
    let spec_of = |f: ModelFamily| {
        specs
            .iter()
            .find(|(g, _)| *g == f)
            .map(|(_, s)| s)
            .ok_or_else(|| StageError::new(Stage::Cv52, format!("no spec for {}", f.short_name())))
    };
    let mut cells = Vec::new();
    for &a in &families {
        for &b in &families {
            let r = if a == b {
                cv52_statistic(&[[0.0; 2]; 5], alpha).stage(Stage::Cv52)?
            } else {
                info!("5x2cv {} vs {}", a.short_name(), b.short_name());
                cv52_paired_t_test(spec_of(a)?, spec_of(b)?, &whole, cv52_pair_seed(config, a, b), alpha)
                    .map_err(|e| StageError::new(Stage::Cv52, format!("{} vs {}: {e}", a.short_name(), b.short_name())))?
            };
            cells.push(pair_cell(a, b, &r, o));
        }
    }
    Ok(PairMatrix {
        method: harlab::stats::TestMethod::Cv52,
        alpha,
        models: families,
        cells,
    })
}

/// Test accuracy of MLPs with 1..n stacked hidden layers, each as wide as the
/// first hidden layer of `ann`.
pub fn hidden_sweep(config: &ExperimentConfig, ann: &ModelSpec, splits: &Splits) -> Result<Vec<HiddenPoint>, StageError> {
    let o = origin(config, Stage::SweepHidden);
    let ModelParams::NeuralNet(params) = &ann.params else {
        return Err(StageError::new(Stage::SweepHidden, "the ann spec is not a neural network"));
    };
    let width = params.hidden_sizes.first().copied().unwrap_or(100);
    let (train, test) = (splits.train.dataset(), splits.test.dataset());
    config
        .protocol
        .hidden_depths
        .par_iter()
        .map(|&depth| {
            let mut p = params.clone();
            p.hidden_sizes = vec![width; depth];
            let spec = ModelSpec {
                params: ModelParams::NeuralNet(p),
                seed: ann.seed,
            };
            let (model, accuracy) = test_accuracy(&spec, train, test).map_err(|e| format!("depth {depth}: {e}"))?;
            let epochs = match &model.state {
                FittedState::NeuralNet { training, .. } => training.epochs,
                _ => 0,
            };
            Ok(HiddenPoint {
                depth,
                hidden_sizes: vec![width; depth],
                accuracy,
                epochs,
                converged: model.diagnostics.converged,
                origin: o,
            })
        })
        .collect::<Result<Vec<_>, String>>()
        .stage(Stage::SweepHidden)
}
