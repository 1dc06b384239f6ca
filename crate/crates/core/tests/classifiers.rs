use harlab::classifiers::mlp::Mlp;
use harlab::classifiers::{
    fit, fit_svm_binary, Criterion, FittedState, ForestParams, KernelKind, LogRegParams, MlpParams, ModelError,
    ModelSpec, Regularizer, SvmParams, TrainedModel, TreeParams,
};
use harlab::data::fixture::{synthetic_har, FIXTURE_SEED};
use harlab::data::{ActivityLabel, LabeledDataset};
use harlab::metrics::accuracy_of;
use harlab::rng::rng_from_seed;
use ndarray::{array, Array2, Axis};
use rand::Rng;

use ActivityLabel::{Laying, Sitting, Walking};

fn fixture() -> (LabeledDataset, LabeledDataset) {
    let (train, test) = synthetic_har(FIXTURE_SEED);
    (train.into_inner(), test.into_inner())
}

fn two_class(ds: &LabeledDataset, a: ActivityLabel, b: ActivityLabel) -> LabeledDataset {
    let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.labels()[i] == a || ds.labels()[i] == b).collect();
    ds.subset(&rows)
}

fn svm(kernel: KernelKind, c: f64) -> ModelSpec {
    ModelSpec::svm(SvmParams {
        kernel,
        c,
        ..Default::default()
    })
    .unwrap()
}

fn small_specs() -> Vec<ModelSpec> {
    vec![
        ModelSpec::tree(TreeParams {
            criterion: Criterion::Entropy,
            max_depth: Some(6),
        })
        .unwrap(),
        ModelSpec::forest(
            ForestParams {
                n_estimators: 15,
                ..Default::default()
            },
            11,
        )
        .unwrap(),
        svm(KernelKind::Rbf, 2.0),
        svm(KernelKind::Linear, 1.0),
        ModelSpec::logreg(LogRegParams {
            regularizer: Regularizer::L1,
            c: 1.0,
            ..Default::default()
        })
        .unwrap(),
        ModelSpec::logreg(LogRegParams::default()).unwrap(),
        ModelSpec::mlp(
            MlpParams {
                hidden_sizes: vec![10],
                max_epochs: 40,
                learning_rate: 1e-2,
                ..Default::default()
            },
            5,
        )
        .unwrap(),
    ]
}

#[test]
fn xor_tree_reaches_full_training_accuracy_at_depth_two() {
    let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let y = vec![Walking, Laying, Laying, Walking];
    let ds = LabeledDataset::from_parts(x.clone(), y.clone()).unwrap();
    let model = fit(&ModelSpec::tree(TreeParams::default()).unwrap(), &ds).unwrap();
    assert_eq!(model.predict(x.view()).unwrap(), y);
    let FittedState::DecisionTree(tree) = &model.state else { panic!() };
    assert_eq!(tree.depth(), 2);

    // Brute force over every axis-aligned stump: none beats 3 of 4.
    for feature in 0..2 {
        for threshold in [-0.5, 0.5, 1.5] {
            for (low, high) in [(Walking, Laying), (Laying, Walking), (Walking, Walking), (Laying, Laying)] {
                let correct = (0..4)
                    .filter(|&i| (if x[[i, feature]] <= threshold { low } else { high }) == y[i])
                    .count();
                assert!(correct <= 3);
            }
        }
    }
}

#[test]
fn unbounded_tree_is_pure_and_depth_is_respected() {
    let (train, _) = fixture();
    let model = fit(&ModelSpec::tree(TreeParams::default()).unwrap(), &train).unwrap();
    let predicted = model.predict(train.features()).unwrap();
    assert_eq!(accuracy_of(train.labels(), &predicted).unwrap(), 1.0);
    for depth in [1, 2, 4] {
        for criterion in [Criterion::Gini, Criterion::Entropy] {
            let spec = ModelSpec::tree(TreeParams {
                criterion,
                max_depth: Some(depth),
            })
            .unwrap();
            let FittedState::DecisionTree(tree) = fit(&spec, &train).unwrap().state else { panic!() };
            assert!(tree.depth() <= depth);
            assert!(tree.n_leaves() <= 1 << depth);
        }
    }
}

#[test]
fn svm_symmetric_two_points() {
    let x = array![[-1.0, 0.0], [1.0, 0.0]];
    let ds = LabeledDataset::from_parts(x, vec![Walking, Sitting]).unwrap();
    let model = fit(&svm(KernelKind::Linear, 1e4), &ds).unwrap();
    let probe = array![[-0.5, 0.0], [0.5, 0.0], [-0.01, 3.0], [0.01, -3.0]];
    assert_eq!(model.predict(probe.view()).unwrap(), vec![Walking, Sitting, Walking, Sitting]);
}

/// `Q_ij = y_i y_j <x_i, x_j>` for four points.
fn q_matrix(x: &Array2<f64>, y: &[f64]) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| y[i] * y[j] * x.row(i).dot(&x.row(j))))
}

/// Dual objective `1/2 a'Qa - sum a`.
fn dual_objective(q: &[[f64; 4]; 4], alpha: &[f64]) -> f64 {
    let mut quad = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            quad += alpha[i] * alpha[j] * q[i][j];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

#[test]
fn svm_four_point_dual_matches_brute_force() {
    let x = array![[1.0, 2.0], [2.0, 1.0], [-1.0, -1.0], [0.0, -2.0]];
    let y = [1.0, 1.0, -1.0, -1.0];
    let c = 1.0;
    let params = SvmParams {
        kernel: KernelKind::Linear,
        c,
        tolerance: 1e-6,
        ..Default::default()
    };
    let m = fit_svm_binary(x.view(), &y, &params).unwrap();
    assert!(m.converged);

    let q = q_matrix(&x, &y);
    // Grid over a1..a3 in [0, C]; a4 follows from sum a_i y_i = 0.
    let steps = 200;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            for k in 0..=steps {
                let a = [i as f64 / steps as f64 * c, j as f64 / steps as f64 * c, k as f64 / steps as f64 * c];
                let a4 = a[0] + a[1] - a[2];
                if !(0.0..=c).contains(&a4) {
                    continue;
                }
                best = best.min(dual_objective(&q, &[a[0], a[1], a[2], a4]));
            }
        }
    }
    assert!((m.objective - best).abs() < 1e-3, "solver {} grid {best}", m.objective);
    assert!((dual_objective(&q, &m.alpha) - m.objective).abs() < 1e-12);
    let balance: f64 = m.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
    assert!(balance.abs() < 1e-12);
}

#[test]
fn svm_label_flip_negates_decision() {
    let (train, test) = fixture();
    let ds = two_class(&train, Sitting, ActivityLabel::Standing);
    let y: Vec<f64> = ds.labels().iter().map(|&l| if l == Sitting { 1.0 } else { -1.0 }).collect();
    let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
    for kernel in [KernelKind::Linear, KernelKind::Rbf, KernelKind::Sigmoid] {
        let params = SvmParams {
            kernel,
            c: 2.0,
            ..Default::default()
        };
        let a = fit_svm_binary(ds.features(), &y, &params).unwrap();
        let b = fit_svm_binary(ds.features(), &flipped, &params).unwrap();
        let k = harlab::classifiers::svm::resolve_kernel(&params, ds.features());
        let x = ds.features().as_standard_layout().into_owned();
        for row in test.features().outer_iter() {
            let fa = a.decision(&k, x.view(), row);
            let fb = b.decision(&k, x.view(), row);
            assert!((fa + fb).abs() <= 1e-9, "{kernel:?}: {fa} vs {fb}");
        }
    }
}

#[test]
fn svm_margin_on_separable_data() {
    let (train, _) = fixture();
    let ds = two_class(&train, Walking, Laying);
    let y: Vec<f64> = ds.labels().iter().map(|&l| if l == Walking { 1.0 } else { -1.0 }).collect();
    let params = SvmParams {
        kernel: KernelKind::Linear,
        c: 1e3,
        ..Default::default()
    };
    let m = fit_svm_binary(ds.features(), &y, &params).unwrap();
    assert!(m.converged);
    let k = harlab::classifiers::svm::resolve_kernel(&params, ds.features());
    let x = ds.features().as_standard_layout().into_owned();
    for (i, row) in x.outer_iter().enumerate() {
        let margin = y[i] * m.decision(&k, x.view(), row);
        assert!(margin >= 1.0 - params.tolerance, "row {i}: {margin}");
    }
}

#[test]
fn one_vs_one_winner_has_most_votes() {
    let (train, test) = fixture();
    let model = fit(&svm(KernelKind::Rbf, 1.0), &train).unwrap();
    let FittedState::Svm(inner) = &model.state else { panic!() };
    assert_eq!(inner.pairs.len(), 15);
    let predicted = model.predict_indices(test.features()).unwrap();
    for (row, &p) in test.features().outer_iter().zip(&predicted) {
        let (votes, _) = inner.votes(row);
        assert_eq!(votes.iter().sum::<usize>(), 15);
        assert!(votes.iter().all(|&v| v <= votes[p]));
    }
}

#[test]
fn logistic_regression_symmetric_data_gives_half_at_origin() {
    let mut rng = rng_from_seed(3);
    let half: Vec<[f64; 3]> = (0..20).map(|_| [rng.gen_range(0.1..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for p in &half {
        rows.extend_from_slice(p);
        labels.push(Walking);
        rows.extend(p.iter().map(|v| -v));
        labels.push(Laying);
    }
    let ds = LabeledDataset::from_parts(Array2::from_shape_vec((40, 3), rows).unwrap(), labels).unwrap();
    for regularizer in [Regularizer::L1, Regularizer::L2] {
        let spec = ModelSpec::logreg(LogRegParams {
            regularizer,
            c: 1.0,
            max_iter: 5000,
            tolerance: 1e-10,
        })
        .unwrap();
        let model = fit(&spec, &ds).unwrap();
        let p = model.predict_proba(array![[0.0, 0.0, 0.0]].view()).unwrap();
        assert!((p[[0, 0]] - 0.5).abs() < 1e-6, "{regularizer:?}: {p}");
    }
}

#[test]
fn logistic_regression_never_ends_above_zero_model_loss() {
    let (train, _) = fixture();
    let n = train.n_rows() as f64;
    for regularizer in [Regularizer::L1, Regularizer::L2] {
        for c in [0.1, 1.0, 100.0] {
            for max_iter in [1, 5, 500] {
                let spec = ModelSpec::logreg(LogRegParams {
                    regularizer,
                    c,
                    max_iter,
                    ..Default::default()
                })
                .unwrap();
                let FittedState::LogisticRegression(m) = fit(&spec, &train).unwrap().state else { panic!() };
                assert_eq!(m.models.len(), 6);
                for b in &m.models {
                    assert!(b.loss <= n * 2f64.ln() * (1.0 + 1e-12), "{regularizer:?} c={c}: {}", b.loss);
                }
            }
        }
    }
}

#[test]
fn forest_probabilities_are_vote_fractions() {
    let (train, test) = fixture();
    let spec = ModelSpec::forest(
        ForestParams {
            n_estimators: 90,
            max_depth: Some(4),
            ..Default::default()
        },
        7,
    )
    .unwrap();
    let model = fit(&spec, &train).unwrap();
    let p = model.predict_proba(test.features()).unwrap();
    for v in p.iter() {
        assert!((v * 90.0 - (v * 90.0).round()).abs() < 1e-9);
    }
    for row in p.outer_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn forest_seeds() {
    let (train, _) = fixture();
    let spec = |seed| {
        ModelSpec::forest(
            ForestParams {
                n_estimators: 5,
                ..Default::default()
            },
            seed,
        )
        .unwrap()
    };
    let a = fit(&spec(1), &train).unwrap();
    assert_eq!(a, fit(&spec(1), &train).unwrap());
    assert_ne!(a.state, fit(&spec(2), &train).unwrap().state);
    let FittedState::RandomForest(forest) = &a.state else { panic!() };
    assert_eq!(forest.features_per_split, 4);
    for i in 0..forest.trees.len() {
        for j in i + 1..forest.trees.len() {
            assert_ne!(forest.trees[i], forest.trees[j]);
        }
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let (train, _) = fixture();
    let rows: Vec<usize> = (0..train.n_rows()).step_by(17).collect();
    let batch = train.subset(&rows);
    let x = batch.features().to_owned();
    let y: Vec<usize> = batch.labels().iter().map(|l| l.index()).collect();
    let alpha = 0.3;
    let h = 1e-5;
    for seed in [1, 2, 3] {
        let mut net = Mlp::glorot(&[x.ncols(), 7, 5, 6], seed);
        let mut rng = rng_from_seed(seed + 100);
        for layer in &mut net.layers {
            layer.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
        let (_, grad) = net.loss_and_grad(x.view(), &y, alpha);
        for li in 0..net.layers.len() {
            let (rows, cols) = net.layers[li].weights.dim();
            for idx in (0..rows * cols).step_by(3) {
                let (r, c) = (idx / cols, idx % cols);
                let w0 = net.layers[li].weights[[r, c]];
                net.layers[li].weights[[r, c]] = w0 + h;
                let (up, _) = net.loss_and_grad(x.view(), &y, alpha);
                net.layers[li].weights[[r, c]] = w0 - h;
                let (down, _) = net.loss_and_grad(x.view(), &y, alpha);
                net.layers[li].weights[[r, c]] = w0;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.layers[li].weights[[r, c]];
                let scale = numeric.abs().max(analytic.abs()).max(1e-3);
                assert!((numeric - analytic).abs() <= 1e-5 * scale, "layer {li} w[{r},{c}]: {analytic} vs {numeric}");
            }
            for b in 0..net.layers[li].bias.len() {
                let b0 = net.layers[li].bias[b];
                net.layers[li].bias[b] = b0 + h;
                let (up, _) = net.loss_and_grad(x.view(), &y, alpha);
                net.layers[li].bias[b] = b0 - h;
                let (down, _) = net.loss_and_grad(x.view(), &y, alpha);
                net.layers[li].bias[b] = b0;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.layers[li].bias[b];
                let scale = numeric.abs().max(analytic.abs()).max(1e-3);
                assert!((numeric - analytic).abs() <= 1e-5 * scale, "layer {li} b[{b}]: {analytic} vs {numeric}");
            }
        }
    }
}

#[test]
fn argmax_of_probabilities_equals_prediction() {
    let (train, test) = fixture();
    for spec in small_specs() {
        let model = fit(&spec, &train).unwrap();
        let predicted = model.predict_indices(test.features()).unwrap();
        match model.predict_proba(test.features()) {
            Ok(p) => {
                for (row, &pred) in p.outer_iter().zip(&predicted) {
                    assert!((row.sum() - 1.0).abs() < 1e-9);
                    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let first = row.iter().position(|&v| v == best).unwrap();
                    assert_eq!(first, pred, "{}", spec.describe());
                }
            }
            Err(ModelError::NoProbabilities(f)) => assert!(!f.has_probabilities()),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn fits_are_deterministic_and_learn_the_fixture() {
    let (train, test) = fixture();
    for spec in small_specs() {
        let a = fit(&spec, &train).unwrap();
        let b = fit(&spec, &train).unwrap();
        assert_eq!(a, b, "{}", spec.describe());
        let acc = accuracy_of(test.labels(), &a.predict(test.features()).unwrap()).unwrap();
        assert!(acc > 0.6, "{} accuracy {acc}", spec.describe());
    }
}

#[test]
fn model_files_round_trip_bit_for_bit() {
    let (train, test) = fixture();
    let dir = tempfile::tempdir().unwrap();
    for (i, spec) in small_specs().into_iter().enumerate() {
        let model = fit(&spec, &train).unwrap();
        let path = dir.path().join(format!("model-{i}.json"));
        model.save(&path).unwrap();
        let loaded = TrainedModel::load(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded.predict(test.features()).unwrap(), model.predict(test.features()).unwrap());
        if let Ok(p) = model.predict_proba(test.features()) {
            let q = loaded.predict_proba(test.features()).unwrap();
            assert!(p.iter().zip(q.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
    assert!(matches!(TrainedModel::from_json("{\"format\":\"other\"}"), Err(ModelError::Format(_))));
    assert!(matches!(
        TrainedModel::from_json("{\"format\":\"harlab-model\",\"version\":99}"),
        Err(ModelError::Format(_))
    ));
}

#[test]
fn prediction_input_errors() {
    let (train, _) = fixture();
    let model = fit(&ModelSpec::tree(TreeParams::default()).unwrap(), &train).unwrap();
    let narrow = Array2::zeros((2, 3));
    assert!(matches!(
        model.predict(narrow.view()),
        Err(ModelError::DimensionMismatch { expected: 20, got: 3 })
    ));
    let mut bad = train.features().select(Axis(0), &[0, 1]);
    bad[[1, 4]] = f64::NAN;
    assert!(matches!(
        model.predict(bad.view()),
        Err(ModelError::NonFiniteInput { row: 1, column: 4 })
    ));
    assert!(matches!(model.predict_proba(train.features()), Err(ModelError::NoProbabilities(_))));
}

#[test]
fn fit_input_errors() {
    let one_class = LabeledDataset::from_parts(array![[0.0], [1.0]], vec![Walking, Walking]).unwrap();
    assert!(matches!(
        fit(&ModelSpec::tree(TreeParams::default()).unwrap(), &one_class),
        Err(ModelError::TooFewClasses(1))
    ));
    let (train, _) = fixture();
    let too_many = ModelSpec::forest(
        ForestParams {
            features_per_split: Some(21),
            ..Default::default()
        },
        1,
    )
    .unwrap();
    assert!(matches!(fit(&too_many, &train), Err(ModelError::InvalidParams(_))));
}
