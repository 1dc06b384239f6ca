use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use harlab::classifiers::{fit, ModelFamily};
use harlab::metrics::accuracy_of;
use harlab_bench::report::ExperimentReport;
use harlab_bench::run::{Manifest, LOCK_FILE};
use harlab_bench::stages::{self, Splits};
use harlab_bench::{rerender, run, ExperimentConfig, ReportFormat, RunStatus, Stage, StageToggles};

fn fixture_config(out: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.toml");
    let mut config = ExperimentConfig::load(&path).unwrap();
    config.out = out.to_path_buf();
    config
}

fn with_stages(out: &Path, names: &[&str]) -> ExperimentConfig {
    let mut config = fixture_config(out);
    config.stages = StageToggles::from_names(names).unwrap();
    config
}

fn manifest(out: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn fixture_splits() -> Splits {
    stages::load_data(&fixture_config(Path::new("unused"))).unwrap()
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let outcome = run(&config).unwrap();
    assert!(!outcome.verified_existing);
    let report = &outcome.report;

    for rel in &outcome.artifacts {
        assert!(dir.path().join(rel).is_file(), "missing {rel}");
    }
    for rel in [
        "config.json",
        "report.json",
        "report.md",
        "manifest.json",
        "plans/grid_folds.json",
        "plans/evaluation_subsamples.json",
        "features/anova_scores.csv",
        "report/accuracy.csv",
        "report/cv52.csv",
    ] {
        assert!(dir.path().join(rel).is_file(), "missing {rel}");
    }
    for family in ModelFamily::ALL {
        let short = family.short_name();
        assert!(dir.path().join(format!("models/{short}.json")).is_file());
        assert!(dir.path().join(format!("grid/{short}.csv")).is_file());
    }
    assert!(!dir.path().join(LOCK_FILE).exists());
    let m = manifest(dir.path());
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(m.completed_stages.last(), Some(&Stage::Report));

    let on_disk = ExperimentReport::from_json(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(&on_disk, report);
}

#[test]
fn report_rows_satisfy_protocol_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let report = run(&config).unwrap().report;
    let p = &config.protocol;

    let explore = report.explore.as_ref().unwrap();
    assert_eq!(explore.class_counts.iter().map(|c| c.train).sum::<usize>(), explore.train_total);
    assert_eq!(explore.class_counts.iter().map(|c| c.test).sum::<usize>(), explore.test_total);
    assert_eq!(explore.train_total, report.provenance.dataset.train_rows);
    assert_eq!(explore.test_total, report.provenance.dataset.test_rows);
    assert_eq!(explore.train_total, 437);
    assert_eq!(explore.test_total, 191);

    let grid = report.grid_search.as_ref().unwrap();
    assert_eq!(grid.len(), ModelFamily::ALL.len());
    let fingerprint = &grid[0].plan_fingerprint;
    assert!(grid.iter().all(|g| &g.plan_fingerprint == fingerprint && g.folds == p.folds));

    let evaluation = report.evaluation.as_ref().unwrap();
    assert_eq!(evaluation.models.len(), ModelFamily::ALL.len());
    for m in &evaluation.models {
        assert_eq!(m.subsample_accuracies.len(), p.table_subsamples);
        assert_eq!(m.welch_scores.len(), p.welch_subsamples);
        let mean = m.subsample_accuracies.iter().sum::<f64>() / m.subsample_accuracies.len() as f64;
        assert!((mean - m.mean_accuracy).abs() < 1e-12);
        assert!(m.subsample_accuracies.iter().chain(&m.welch_scores).all(|a| (0.0..=1.0).contains(a)));
        let per_class = m.per_class.as_ref().unwrap();
        assert_eq!(per_class.len(), 6);
    }

    let n_sig = p.significance_models.len();
    for matrix in [report.welch.as_ref().unwrap(), report.cv52.as_ref().unwrap()] {
        assert_eq!(matrix.cells.len(), n_sig * n_sig);
        for &a in &matrix.models {
            let diag = matrix.cell(a, a).unwrap();
            assert_eq!(diag.t_value, 0.0);
            assert_eq!(diag.p_value, 1.0);
            assert!(!diag.reject_null);
            for &b in &matrix.models {
                let c = matrix.cell(a, b).unwrap();
                assert!((0.0..=1.0).contains(&c.p_value));
                if !c.degenerate {
                    assert_eq!(c.reject_null, c.p_value < matrix.alpha);
                }
            }
        }
    }
    let welch = report.welch.as_ref().unwrap();
    for (a, b) in [(ModelFamily::Svm, ModelFamily::NeuralNet), (ModelFamily::LogisticRegression, ModelFamily::Svm)] {
        let ab = welch.cell(a, b).unwrap();
        let ba = welch.cell(b, a).unwrap();
        assert_eq!(ab.t_value, -ba.t_value);
        assert_eq!(ab.p_value, ba.p_value);
    }
    let cv52 = report.cv52.as_ref().unwrap();
    assert!(cv52.cells.iter().all(|c| c.df == 5.0));

    let hidden = report.hidden_sweep.as_ref().unwrap();
    assert_eq!(hidden.iter().map(|h| h.depth).collect::<Vec<_>>(), p.hidden_depths);
    assert!(hidden.iter().all(|h| h.hidden_sizes.len() == h.depth));

    let sweep = report.feature_sweep.as_ref().unwrap();
    assert_eq!(sweep.len(), p.feature_grid.len() * ModelFamily::ALL.len());
    assert!(sweep.iter().all(|s| s.k <= report.provenance.dataset.features));
}

#[test]
fn rows_record_their_stage_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let report = run(&config).unwrap().report;
    let seed = |s: Stage| config.stage_seed(s);

    for o in &report.provenance.stages {
        assert_eq!(o.seed, seed(o.stage));
    }
    assert!(report.explore.unwrap().magnitude.iter().all(|g| g.origin.stage == Stage::Explore));
    assert!(report.grid_search.unwrap().iter().all(|g| g.origin.seed == seed(Stage::GridSearch)));
    assert!(report.feature_sweep.unwrap().iter().all(|s| s.origin.stage == Stage::SweepFeatures));
    assert!(report.evaluation.unwrap().models.iter().all(|m| m.origin.seed == seed(Stage::Evaluate)));
    assert!(report.welch.unwrap().cells.iter().all(|c| c.origin.stage == Stage::Welch));
    assert!(report.cv52.unwrap().cells.iter().all(|c| c.origin.seed == seed(Stage::Cv52)));
    assert!(report.hidden_sweep.unwrap().iter().all(|h| h.origin.stage == Stage::SweepHidden));

    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(text.contains("\"stage\": \"sweep-hidden\""));
}

#[test]
fn selecting_every_feature_equals_the_unselected_fit() {
    let splits = fixture_splits();
    let width = splits.train.dataset().n_features();
    let mut config = fixture_config(Path::new("unused"));
    config.protocol.feature_grid = vec![width, width + 50];
    let specs: Vec<_> = [ModelFamily::DecisionTree, ModelFamily::LogisticRegression]
        .into_iter()
        .map(|f| (f, config.best_spec(f)))
        .collect();
    let (points, scores) = stages::feature_sweep(&config, &specs, &splits).unwrap();
    assert_eq!(scores.len(), width);
    assert_eq!(points.len(), 4);
    for (family, spec) in &specs {
        let model = fit(spec, splits.train.dataset()).unwrap();
        let predicted = model.predict(splits.test.dataset().features()).unwrap();
        let expected = accuracy_of(splits.test.dataset().labels(), &predicted).unwrap();
        for p in points.iter().filter(|p| p.family == *family) {
            assert_eq!(p.k, width);
            assert_eq!(p.accuracy, expected, "{} at requested k {}", family.short_name(), p.requested_k);
        }
    }
}

#[test]
fn rerun_in_place_verifies_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let config = with_stages(dir.path(), &["explore", "evaluate"]);
    let first = run(&config).unwrap();
    let before = fs::metadata(dir.path().join("report.json")).unwrap().modified().unwrap();
    let second = run(&config).unwrap();
    assert!(second.verified_existing);
    assert_eq!(first.report, second.report);
    assert_eq!(first.artifacts, second.artifacts);
    let after = fs::metadata(dir.path().join("report.json")).unwrap().modified().unwrap();
    assert_eq!(before, after);

    fs::write(dir.path().join("report.md"), "edited\n").unwrap();
    let err = run(&config).unwrap_err();
    assert_eq!(err.stage, Stage::Report);
    assert!(err.to_string().contains("report.md"));
}

#[test]
fn different_config_is_refused_in_a_completed_run() {
    let dir = tempfile::tempdir().unwrap();
    run(&with_stages(dir.path(), &["explore"])).unwrap();
    let mut other = with_stages(dir.path(), &["explore"]);
    other.seed += 1;
    let err = run(&other).unwrap_err();
    assert_eq!(err.stage, Stage::Config);
    assert!(err.to_string().contains("different configuration"));
}

#[test]
fn held_lock_blocks_a_second_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(LOCK_FILE), "1\n").unwrap();
    let err = run(&with_stages(dir.path(), &["explore"])).unwrap_err();
    assert_eq!(err.stage, Stage::Config);
    assert!(err.to_string().contains("in use"));
    assert!(dir.path().join(LOCK_FILE).exists());
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn failed_stage_leaves_manifest_and_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = with_stages(dir.path(), &["explore", "evaluate"]);
    config.protocol.magnitude_feature = "no-such-feature".into();
    let err = run(&config).unwrap_err();
    assert_eq!(err.stage, Stage::Explore);

    let m = manifest(dir.path());
    assert_eq!(m.status, RunStatus::Failed);
    assert_eq!(m.failed_stage, Some(Stage::Explore));
    assert!(m.error.unwrap().contains("no-such-feature"));
    assert_eq!(m.completed_stages, vec![Stage::Data]);
    assert!(m.artifacts.contains(&"report.partial.json".to_string()));
    let partial =
        ExperimentReport::from_json(&fs::read_to_string(dir.path().join("report.partial.json")).unwrap()).unwrap();
    assert!(partial.explore.is_none());
    assert!(!dir.path().join("report.json").exists());
    assert!(!dir.path().join(LOCK_FILE).exists());
}

#[test]
fn checksum_mismatch_stops_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = with_stages(dir.path(), &["explore"]);
    config.checksums.insert("train/y_train.txt".into(), "00".repeat(32));
    let err = run(&config).unwrap_err();
    assert_eq!(err.stage, Stage::Data);
    assert!(err.to_string().contains("y_train.txt"));
    assert_eq!(manifest(dir.path()).failed_stage, Some(Stage::Data));
}

#[test]
fn disabled_stages_leave_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&with_stages(dir.path(), &["explore"])).unwrap().report;
    assert!(report.explore.is_some());
    assert!(report.grid_search.is_none());
    assert!(report.feature_sweep.is_none());
    assert!(report.evaluation.is_none());
    assert!(report.welch.is_none());
    assert!(report.cv52.is_none());
    assert!(report.hidden_sweep.is_none());
    assert_eq!(
        report.provenance.stages.iter().map(|o| o.stage).collect::<Vec<_>>(),
        vec![Stage::Explore]
    );
    assert!(!dir.path().join("models").exists());
    assert!(!dir.path().join("grid").exists());
}

#[test]
fn welch_pulls_in_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&with_stages(dir.path(), &["welch"])).unwrap().report;
    assert!(report.evaluation.is_some());
    assert!(report.welch.is_some());
    assert!(report.cv52.is_none());
}

#[test]
fn report_is_rerendered_from_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = with_stages(dir.path(), &["explore", "evaluate"]);
    run(&config).unwrap();
    let md = dir.path().join("report.md");
    let original = fs::read_to_string(&md).unwrap();
    fs::remove_file(&md).unwrap();
    fs::remove_dir_all(dir.path().join("report")).unwrap();

    let report = rerender(dir.path(), &[ReportFormat::Markdown, ReportFormat::Csv]).unwrap();
    assert_eq!(fs::read_to_string(&md).unwrap(), original);
    assert!(dir.path().join("report/accuracy.csv").is_file());
    assert!(report.evaluation.is_some());
    assert!(run(&config).unwrap().verified_existing);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_harlab"))
}

fn fixture_toml() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.toml")
}

#[test]
fn cli_explore_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let output = cli()
        .arg("explore")
        .arg("--config")
        .arg(fixture_toml())
        .arg("--out")
        .arg(dir.path())
        .arg("--format")
        .arg("json")
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("wrote 3 artifacts"));
    assert!(dir.path().join("report.json").is_file());
    assert!(!dir.path().join("report.md").exists());
}

#[test]
fn cli_exit_codes_separate_config_and_stage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = cli()
        .args(["all", "--stages", "explore,nonsense"])
        .arg("--config")
        .arg(fixture_toml())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("[config]"));

    let missing = cli()
        .arg("explore")
        .arg("--data")
        .arg(dir.path().join("absent"))
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("[data]"));
}
