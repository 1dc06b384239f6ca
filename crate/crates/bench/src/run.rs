//! Run directories: locking, artifact persistence and the stage loop.
//!
//! A run directory holds one experiment:
//!
//! ```text
//! config.json            resolved configuration
//! report.json            canonical report (always written)
//! report.md, report/*.csv
//! manifest.json          status, completed stages, artifact list
//! plans/                 grid-search folds and evaluation subsamples
//! grid/<model>.{csv,json}
//! features/anova_scores.csv
//! models/<model>.json
//! ```
//!
//! Re-running a completed directory with the same configuration recomputes
//! everything and compares it byte for byte against the files on disk
//! without writing; any difference is an error. A failed run leaves
//! `manifest.json` and `report.partial.json` describing what finished.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use harlab::classifiers::{ModelFamily, ModelSpec};
use harlab::feature_select::write_scores_csv;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ExperimentConfig, ReportFormat};
use crate::error::{Stage, StageError, StageResultExt};
use crate::render;
use crate::report::{
    BestSpecEntry, ExperimentReport, GridSummary, Origin, Provenance, SpecSource, REPORT_FORMAT, REPORT_VERSION,
};
use crate::stages::{self, Splits};

pub const LOCK_FILE: &str = "run.lock";

/// Exclusive claim on a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, StageError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StageError::new(
                Stage::Config,
                format!(
                    "{} is in use by another run (delete {} if that run is gone)",
                    dir.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(StageError::new(Stage::Config, format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Fresh,
    Verify,
}

struct Artifacts {
    root: PathBuf,
    mode: Mode,
    written: Vec<String>,
}

impl Artifacts {
    fn put(&mut self, rel: &str, bytes: &[u8], stage: Stage) -> Result<(), StageError> {
        let path = self.root.join(rel);
        match self.mode {
            Mode::Fresh => {
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)
                        .map_err(|e| StageError::new(stage, format!("{}: {e}", parent.display())))?;
                }
                fs::write(&path, bytes).map_err(|e| StageError::new(stage, format!("{}: {e}", path.display())))?;
            }
            Mode::Verify => {
                let existing = fs::read(&path).map_err(|e| {
                    StageError::new(stage, format!("completed run lacks {}: {e}", path.display()))
                })?;
                if existing != bytes {
                    return Err(StageError::new(
                        stage,
                        format!("{rel} differs from the completed run in {}", self.root.display()),
                    ));
                }
            }
        }
        self.written.push(rel.to_string());
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, rel: &str, value: &T, stage: Stage) -> Result<(), StageError> {
        let mut text = serde_json::to_string_pretty(value).stage(stage)?;
        text.push('\n');
        self.put(rel, text.as_bytes(), stage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub completed_stages: Vec<Stage>,
    pub artifacts: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: ExperimentReport,
    /// The directory already held this run and every artifact matched.
    pub verified_existing: bool,
    pub artifacts: Vec<String>,
}

/// Runs every enabled stage of `config` in its output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, StageError> {
    config.validate().stage(Stage::Config)?;
    let out = config.out.clone();
    fs::create_dir_all(&out).map_err(|e| StageError::new(Stage::Config, format!("{}: {e}", out.display())))?;
    let _lock = RunLock::acquire(&out)?;

    let snapshot = config.snapshot_json();
    let mode = if out.join("report.json").is_file() {
        let previous = fs::read_to_string(out.join("config.json")).unwrap_or_default();
        if previous != snapshot {
            return Err(StageError::new(
                Stage::Config,
                format!(
                    "{} holds a completed run with a different configuration; choose another output directory",
                    out.display()
                ),
            ));
        }
        info!("{} holds this run already; verifying", out.display());
        Mode::Verify
    } else {
        Mode::Fresh
    };

    let mut artifacts = Artifacts {
        root: out.clone(),
        mode,
        written: Vec::new(),
    };
    let mut partial = None;
    let mut completed = Vec::new();
    match execute(config, &mut artifacts, &mut partial, &mut completed) {
        Ok(report) => Ok(RunOutcome {
            out_dir: out,
            report,
            verified_existing: mode == Mode::Verify,
            artifacts: artifacts.written,
        }),
        Err(e) => {
            if mode == Mode::Fresh {
                record_failure(&out, &e, &completed, &artifacts.written, partial.as_ref());
            }
            Err(e)
        }
    }
}

fn record_failure(
    out: &Path,
    error: &StageError,
    completed: &[Stage],
    written: &[String],
    partial: Option<&ExperimentReport>,
) {
    let mut artifacts = written.to_vec();
    if let Some(report) = partial {
        if fs::write(out.join("report.partial.json"), report.to_json()).is_ok() {
            artifacts.push("report.partial.json".into());
        }
    }
    let manifest = Manifest {
        status: RunStatus::Failed,
        failed_stage: Some(error.stage),
        error: Some(error.chain()),
        completed_stages: completed.to_vec(),
        artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    if let Err(e) = fs::write(out.join("manifest.json"), text) {
        warn!("could not write the failure manifest: {e}");
    }
}

fn specs_of(report: &ExperimentReport) -> Vec<(ModelFamily, ModelSpec)> {
    report.best_specs.iter().map(|b| (b.family, b.spec.clone())).collect()
}

fn execute(
    config: &ExperimentConfig,
    artifacts: &mut Artifacts,
    partial: &mut Option<ExperimentReport>,
    completed: &mut Vec<Stage>,
) -> Result<ExperimentReport, StageError> {
    artifacts.put("config.json", config.snapshot_json().as_bytes(), Stage::Config)?;
    let splits = stages::load_data(config)?;
    completed.push(Stage::Data);

    let best_specs = ModelFamily::ALL
        .iter()
        .map(|&family| {
            let spec = config.best_spec(family);
            BestSpecEntry {
                family,
                source: SpecSource::Config,
                description: spec.describe(),
                spec,
            }
        })
        .collect();
    let report = partial.insert(ExperimentReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            master_seed: config.seed,
            config_sha256: config.fingerprint(),
            dataset: splits.summary(),
            stages: Vec::new(),
        },
        explore: None,
        grid_search: None,
        best_specs,
        feature_sweep: None,
        evaluation: None,
        welch: None,
        cv52: None,
        hidden_sweep: None,
    });

    let toggles = config.stages.resolved();
    for stage in toggles.stages() {
        let started = Instant::now();
        info!("stage {stage}: start");
        run_stage(stage, config, &splits, report, artifacts, toggles.per_class)?;
        report.provenance.stages.push(Origin {
            stage,
            seed: config.stage_seed(stage),
        });
        completed.push(stage);
        info!("stage {stage}: done in {:.1} s", started.elapsed().as_secs_f64());
    }

    let report = report.clone();
    artifacts.put("report.json", report.to_json().as_bytes(), Stage::Report)?;
    write_renderings(&report, &config.formats, |rel, text| artifacts.put(rel, text.as_bytes(), Stage::Report))?;
    completed.push(Stage::Report);
    let manifest = Manifest {
        status: RunStatus::Complete,
        failed_stage: None,
        error: None,
        completed_stages: completed.clone(),
        artifacts: artifacts.written.clone(),
    };
    artifacts.put_json("manifest.json", &manifest, Stage::Report)?;
    Ok(report)
}

fn run_stage(
    stage: Stage,
    config: &ExperimentConfig,
    splits: &Splits,
    report: &mut ExperimentReport,
    artifacts: &mut Artifacts,
    per_class: bool,
) -> Result<(), StageError> {
    match stage {
        Stage::Explore => report.explore = Some(stages::explore(config, splits)?),
        Stage::GridSearch => {
            let plan = stages::grid_plan(config, splits)?;
            artifacts.put_json("plans/grid_folds.json", &plan, stage)?;
            let results = stages::grid_search_all(config, splits)?;
            let origin = Origin {
                stage,
                seed: config.stage_seed(stage),
            };
            let mut summaries = Vec::new();
            for r in &results {
                let short = r.family.short_name();
                let table_csv = format!("grid/{short}.csv");
                artifacts.put(&table_csv, r.to_csv().as_bytes(), stage)?;
                artifacts.put(&format!("grid/{short}.json"), (r.to_json() + "\n").as_bytes(), stage)?;
                let best = &r.table[r.best_index];
                summaries.push(GridSummary {
                    family: r.family,
                    combinations: r.table.len(),
                    folds: r.k,
                    plan_fingerprint: r.plan_fingerprint.clone(),
                    best_index: r.best_index,
                    best_params: best.params.clone(),
                    best_mean_accuracy: r.best_mean_accuracy,
                    best_std_accuracy: best.std_accuracy,
                    failed_combinations: r.table.iter().filter(|row| row.failed()).count(),
                    table_csv,
                    origin,
                });
                if let Some(entry) = report.best_specs.iter_mut().find(|b| b.family == r.family) {
                    entry.spec = r.best_spec.clone();
                    entry.description = r.best_spec.describe();
                    entry.source = SpecSource::GridSearch;
                }
            }
            report.grid_search = Some(summaries);
        }
        Stage::SweepFeatures => {
            let (points, scores) = stages::feature_sweep(config, &specs_of(report), splits)?;
            let mut csv = Vec::new();
            write_scores_csv(&mut csv, &scores, splits.train.dataset().feature_names()).stage(stage)?;
            artifacts.put("features/anova_scores.csv", &csv, stage)?;
            report.feature_sweep = Some(points);
        }
        Stage::Evaluate => {
            let output = stages::evaluate(config, &specs_of(report), splits, per_class)?;
            for model in &output.models {
                let rel = format!("models/{}.json", model.family().short_name());
                artifacts.put(&rel, (model.to_json() + "\n").as_bytes(), stage)?;
            }
            artifacts.put_json(
                "plans/evaluation_subsamples.json",
                &json!({
                    "fraction": config.protocol.subsample_fraction,
                    "table": output.evaluation.table_seeds.iter().zip(&output.table_rows)
                        .map(|(s, rows)| json!({"seed": s, "rows": rows})).collect::<Vec<_>>(),
                    "welch": output.evaluation.welch_seeds.iter().zip(&output.welch_rows)
                        .map(|(s, rows)| json!({"seed": s, "rows": rows})).collect::<Vec<_>>(),
                }),
                stage,
            )?;
            report.evaluation = Some(output.evaluation);
        }
        Stage::Welch => {
            let evaluation = report
                .evaluation
                .as_ref()
                .ok_or_else(|| StageError::new(stage, "needs the evaluate stage"))?;
            report.welch = Some(stages::welch_matrix(config, evaluation)?);
        }
        Stage::Cv52 => report.cv52 = Some(stages::cv52_matrix(config, &specs_of(report), splits)?),
        Stage::SweepHidden => {
            let ann = report
                .best_spec(ModelFamily::NeuralNet)
                .cloned()
                .ok_or_else(|| StageError::new(stage, "no ann spec"))?;
            report.hidden_sweep = Some(stages::hidden_sweep(config, &ann, splits)?);
        }
        Stage::Config | Stage::Data | Stage::Report => {}
    }
    Ok(())
}

fn write_renderings(
    report: &ExperimentReport,
    formats: &[ReportFormat],
    mut put: impl FnMut(&str, &str) -> Result<(), StageError>,
) -> Result<(), StageError> {
    if formats.contains(&ReportFormat::Markdown) {
        put("report.md", &render::markdown(report))?;
    }
    if formats.contains(&ReportFormat::Csv) {
        for (name, text) in render::csv_tables(report) {
            put(&format!("report/{name}"), &text)?;
        }
    }
    Ok(())
}

/// Re-renders the markdown and CSV files of a completed run from its `report.json`.
pub fn rerender(out: &Path, formats: &[ReportFormat]) -> Result<ExperimentReport, StageError> {
    let _lock = RunLock::acquire(out)?;
    let path = out.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| StageError::new(Stage::Report, format!("{}: {e}", path.display())))?;
    let report = ExperimentReport::from_json(&text)
        .map_err(|e| StageError::new(Stage::Report, format!("{}: {e}", path.display())))?;
    write_renderings(&report, formats, |rel, text| {
        let path = out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| StageError::new(Stage::Report, format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, text).map_err(|e| StageError::new(Stage::Report, format!("{}: {e}", path.display())))
    })?;
    Ok(report)
}
