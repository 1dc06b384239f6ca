use harlab::classifiers::{KernelKind, ModelSpec, SvmParams, TreeParams};
use harlab::data::fixture::{synthetic_har, FIXTURE_SEED};
use harlab::data::split_half;
use harlab::metrics::accuracy_of;
use harlab::stats::{cv52_paired_t_test, cv52_statistic, t_two_sided_p, StatsError, TestMethod};

fn stump() -> ModelSpec {
    ModelSpec::tree(TreeParams {
        max_depth: Some(1),
        ..Default::default()
    })
    .unwrap()
}

fn linear_svm() -> ModelSpec {
    ModelSpec::svm(SvmParams {
        kernel: KernelKind::Linear,
        c: 1.0,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn identical_models_are_degenerate() {
    let (train, _) = synthetic_har(FIXTURE_SEED);
    let r = cv52_paired_t_test(&stump(), &stump(), &train, 4, 0.05).unwrap();
    assert_eq!(r.method, TestMethod::Cv52);
    assert!(r.degenerate);
    assert_eq!((r.t_value, r.p_value, r.reject_null), (0.0, 1.0, false));
    assert_eq!(r.cv52_table.unwrap().differences, [[0.0; 2]; 5]);
}

#[test]
fn procedure_matches_manual_replay() {
    let (train, _) = synthetic_har(FIXTURE_SEED);
    let r = cv52_paired_t_test(&linear_svm(), &stump(), &train, 11, 0.05).unwrap();
    let table = r.cv52_table.clone().unwrap();
    assert_eq!(r.df, 5.0);

    // Replay repetition 0 by hand from the recorded split seed.
    let (a, b) = split_half(&train, table.split_seeds[0]).unwrap();
    let score = |spec: &ModelSpec, fit_on: &harlab::data::LabeledDataset, test_on: &harlab::data::LabeledDataset| {
        let model = harlab::classifiers::fit(spec, fit_on).unwrap();
        accuracy_of(test_on.labels(), &model.predict(test_on.features()).unwrap()).unwrap()
    };
    let p1 = score(&linear_svm(), &a, &b) - score(&stump(), &a, &b);
    let p2 = score(&linear_svm(), &b, &a) - score(&stump(), &b, &a);
    assert_eq!(table.differences[0], [p1, p2]);

    let recomputed = cv52_statistic(&table.differences, 0.05).unwrap();
    assert_eq!(recomputed.t_value, r.t_value);
    assert_eq!(r.p_value, t_two_sided_p(r.t_value, 5.0));
    assert!(r.t_value > 0.0, "the SVM should beat a stump");
}

#[test]
fn swapping_models_negates_statistic() {
    let (train, _) = synthetic_har(FIXTURE_SEED);
    let ab = cv52_paired_t_test(&linear_svm(), &stump(), &train, 3, 0.05).unwrap();
    let ba = cv52_paired_t_test(&stump(), &linear_svm(), &train, 3, 0.05).unwrap();
    assert_eq!(ab.t_value, -ba.t_value);
    assert_eq!(ab.p_value, ba.p_value);
    let again = cv52_paired_t_test(&linear_svm(), &stump(), &train, 3, 0.05).unwrap();
    assert_eq!(again, ab);
    let other_seed = cv52_paired_t_test(&linear_svm(), &stump(), &train, 4, 0.05).unwrap();
    assert_ne!(other_seed.cv52_table, ab.cv52_table);
}

#[test]
fn rejects_bad_alpha() {
    let (train, _) = synthetic_har(FIXTURE_SEED);
    assert!(matches!(
        cv52_paired_t_test(&stump(), &stump(), &train, 1, 0.0),
        Err(StatsError::InvalidAlpha(_))
    ));
}
