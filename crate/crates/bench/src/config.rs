//! Experiment configuration, read from TOML.
//!
//! Every key is optional; missing keys take the defaults of the published
//! protocol. A relative `data` path in a config file resolves against the
//! directory of that file, `out` against the working directory.
//!
//! ```toml
//! seed = 2021
//! data = "UCI HAR Dataset"
//! out = "runs/har"
//! formats = ["markdown", "csv", "json"]
//!
//! [stages]
//! cv52 = false
//!
//! [protocol]
//! feature_grid = [100, 200, 300, 400, 500, 561]
//!
//! [best.svm]
//! family = "svm"
//! kernel = "linear"
//! c = 1.0
//!
//! [grids.rf]
//! n_estimators = [10, 90]
//! max_depth = ["none", 6]
//!
//! [checksums]
//! "train/X_train.txt" = "<sha256 hex>"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use harlab::classifiers::{
    Criterion, ForestParams, KernelKind, LogRegParams, MlpParams, ModelFamily, ModelSpec, Regularizer, SvmParams,
    TreeParams,
};
use harlab::model_selection::{GridAxis, ParamGrid};
use harlab::rng::derive_seed;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::Stage;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format {other:?} (expected markdown, csv or json)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Markdown => "markdown",
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

/// Which stages run. Welch and per-class reports need the evaluate stage,
/// which [`StageToggles::resolved`] switches on for them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub explore: bool,
    pub sweep_features: bool,
    pub grid_search: bool,
    pub evaluate: bool,
    pub per_class: bool,
    pub welch: bool,
    pub cv52: bool,
    pub sweep_hidden_layers: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self::all()
    }
}

impl StageToggles {
    pub fn all() -> Self {
        Self {
            explore: true,
            sweep_features: true,
            grid_search: true,
            evaluate: true,
            per_class: true,
            welch: true,
            cv52: true,
            sweep_hidden_layers: true,
        }
    }

    pub fn none() -> Self {
        Self {
            explore: false,
            sweep_features: false,
            grid_search: false,
            evaluate: false,
            per_class: false,
            welch: false,
            cv52: false,
            sweep_hidden_layers: false,
        }
    }

    /// Toggles from stage names such as `explore,grid-search,significance`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, ConfigError> {
        let mut t = Self::none();
        for name in names {
            match name.as_ref().trim().replace('_', "-").as_str() {
                "explore" => t.explore = true,
                "sweep-features" => t.sweep_features = true,
                "grid-search" => t.grid_search = true,
                "evaluate" => t.evaluate = true,
                "per-class" => t.per_class = true,
                "welch" => t.welch = true,
                "cv52" => t.cv52 = true,
                "significance" => {
                    t.welch = true;
                    t.cv52 = true;
                }
                "sweep-hidden" | "sweep-hidden-layers" => t.sweep_hidden_layers = true,
                "all" => t = Self::all(),
                other => return Err(ConfigError::Invalid(format!("unknown stage {other:?}"))),
            }
        }
        Ok(t)
    }

    pub fn resolved(mut self) -> Self {
        if self.welch || self.per_class {
            self.evaluate = true;
        }
        self
    }

    /// Enabled stages in execution order.
    pub fn stages(&self) -> Vec<Stage> {
        let t = self.resolved();
        [
            (t.explore, Stage::Explore),
            (t.grid_search, Stage::GridSearch),
            (t.sweep_features, Stage::SweepFeatures),
            (t.evaluate, Stage::Evaluate),
            (t.welch, Stage::Welch),
            (t.cv52, Stage::Cv52),
            (t.sweep_hidden_layers, Stage::SweepHidden),
        ]
        .into_iter()
        .filter_map(|(on, s)| on.then_some(s))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    /// k of the stratified k-fold grid search.
    pub folds: usize,
    /// Fraction of the test split drawn by every evaluation subsample.
    pub subsample_fraction: f64,
    /// Subsamples averaged into the accuracy and per-class tables.
    pub table_subsamples: usize,
    /// Subsamples whose accuracies feed Welch's test.
    pub welch_subsamples: usize,
    pub alpha: f64,
    /// Feature counts of the ANOVA sweep; values above the dataset width are capped.
    pub feature_grid: Vec<usize>,
    /// Numbers of stacked hidden layers in the MLP depth sweep.
    pub hidden_depths: Vec<usize>,
    /// Short names of the models compared by the significance tests.
    pub significance_models: Vec<String>,
    /// Feature summarised per static/dynamic group by the explore stage.
    pub magnitude_feature: String,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            folds: 5,
            subsample_fraction: 0.5,
            table_subsamples: 5,
            welch_subsamples: 10,
            alpha: 0.05,
            feature_grid: vec![100, 200, 300, 400, 500, 561],
            hidden_depths: vec![1, 2, 3, 4, 5],
            significance_models: vec!["svm".into(), "ann".into(), "lr".into()],
            magnitude_feature: "tBodyAccMag-mean()".into(),
        }
    }
}

/// Parameters used whenever the grid-search stage does not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BestSpecs {
    pub dt: ModelSpec,
    pub rf: ModelSpec,
    pub svm: ModelSpec,
    pub ann: ModelSpec,
    pub lr: ModelSpec,
}

impl Default for BestSpecs {
    fn default() -> Self {
        let tree = TreeParams {
            criterion: Criterion::Gini,
            max_depth: Some(4),
        };
        let forest = ForestParams {
            criterion: Criterion::Gini,
            n_estimators: 90,
            max_depth: Some(6),
            ..Default::default()
        };
        let svm = SvmParams {
            kernel: KernelKind::Linear,
            c: 1.0,
            ..Default::default()
        };
        let mlp = MlpParams {
            hidden_sizes: vec![50],
            alpha: 0.01,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.9,
            ..Default::default()
        };
        let logreg = LogRegParams {
            regularizer: Regularizer::L1,
            c: 2.0,
            ..Default::default()
        };
        Self {
            dt: ModelSpec::tree(tree).expect("valid defaults"),
            rf: ModelSpec::forest(forest, 0).expect("valid defaults"),
            svm: ModelSpec::svm(svm).expect("valid defaults"),
            ann: ModelSpec::mlp(mlp, 0).expect("valid defaults"),
            lr: ModelSpec::logreg(logreg).expect("valid defaults"),
        }
    }
}

impl BestSpecs {
    pub fn get(&self, family: ModelFamily) -> &ModelSpec {
        match family {
            ModelFamily::DecisionTree => &self.dt,
            ModelFamily::RandomForest => &self.rf,
            ModelFamily::Svm => &self.svm,
            ModelFamily::NeuralNet => &self.ann,
            ModelFamily::LogisticRegression => &self.lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Root of the dataset: `train/` and `test/` in the UCI HAR layout.
    pub data: PathBuf,
    pub out: PathBuf,
    /// Report formats besides the canonical `report.json`.
    pub formats: Vec<ReportFormat>,
    pub stages: StageToggles,
    pub protocol: Protocol,
    pub best: BestSpecs,
    /// Per-family grid overrides: axis name to candidate values. `"none"`
    /// stands for an absent optional value.
    pub grids: BTreeMap<String, BTreeMap<String, Vec<Value>>>,
    /// Expected SHA-256 of files under `data`, keyed by relative path.
    pub checksums: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            data: PathBuf::from("UCI HAR Dataset"),
            out: PathBuf::from("runs/har"),
            formats: vec![ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json],
            stages: StageToggles::all(),
            protocol: Protocol::default(),
            best: BestSpecs::default(),
            grids: BTreeMap::new(),
            checksums: BTreeMap::new(),
        }
    }
}

fn none_to_null(v: &Value) -> Value {
    match v {
        Value::String(s) if s == "none" => Value::Null,
        other => other.clone(),
    }
}

fn family_of(short: &str) -> Result<ModelFamily, ConfigError> {
    ModelFamily::from_short_name(short)
        .ok_or_else(|| ConfigError::Invalid(format!("unknown model {short:?} (expected dt, rf, svm, ann or lr)")))
}

impl ExperimentConfig {
    /// Reads and validates a TOML file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if config.data.is_relative() {
            if let Some(dir) = path.parent() {
                config.data = dir.join(&config.data);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.protocol;
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if p.folds < 2 {
            return bad(format!("protocol.folds must be at least 2, got {}", p.folds));
        }
        if !(p.subsample_fraction > 0.0 && p.subsample_fraction <= 1.0) {
            return bad(format!("protocol.subsample_fraction must lie in (0, 1], got {}", p.subsample_fraction));
        }
        if p.table_subsamples == 0 {
            return bad("protocol.table_subsamples must be positive".into());
        }
        if p.welch_subsamples < 2 {
            return bad("protocol.welch_subsamples must be at least 2".into());
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return bad(format!("protocol.alpha must lie in (0, 1), got {}", p.alpha));
        }
        if p.feature_grid.is_empty() || p.feature_grid.contains(&0) {
            return bad("protocol.feature_grid must be a non-empty list of positive counts".into());
        }
        if p.hidden_depths.is_empty() || p.hidden_depths.contains(&0) {
            return bad("protocol.hidden_depths must be a non-empty list of positive depths".into());
        }
        let families = self.significance_families()?;
        if families.is_empty() {
            return bad("protocol.significance_models is empty".into());
        }
        for (i, f) in families.iter().enumerate() {
            if families[..i].contains(f) {
                return bad(format!("protocol.significance_models lists {} twice", f.short_name()));
            }
        }
        if self.formats.is_empty() {
            return bad("formats is empty".into());
        }
        for family in ModelFamily::ALL {
            let spec = self.best.get(family);
            if spec.family() != family {
                return bad(format!(
                    "best.{} describes a {} model",
                    family.short_name(),
                    spec.family().short_name()
                ));
            }
            spec.params
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("best.{}: {e}", family.short_name())))?;
        }
        for short in self.grids.keys() {
            self.param_grid(family_of(short)?)?;
        }
        for (file, digest) in &self.checksums {
            if digest.len() != 64 || !digest.chars().all(|c| c.is_ascii_hexdigit()) {
                return bad(format!("checksum of {file:?} is not a SHA-256 hex digest"));
            }
        }
        Ok(())
    }

    pub fn significance_families(&self) -> Result<Vec<ModelFamily>, ConfigError> {
        self.protocol.significance_models.iter().map(|s| family_of(s)).collect()
    }

    /// Seed of every fitted model of `family` in this run.
    pub fn model_seed(&self, family: ModelFamily) -> u64 {
        let index = ModelFamily::ALL.iter().position(|&f| f == family).unwrap_or(0);
        derive_seed(self.seed, "model", index as u64)
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.seed, stage.tag(), 0)
    }

    /// The configured best spec of `family`, seeded for this run.
    pub fn best_spec(&self, family: ModelFamily) -> ModelSpec {
        let mut spec = self.best.get(family).clone();
        spec.seed = self.model_seed(family);
        spec
    }

    /// The default search space of `family` with this config's overrides applied.
    pub fn param_grid(&self, family: ModelFamily) -> Result<ParamGrid, ConfigError> {
        let mut grid = ParamGrid::default_for(family, self.model_seed(family));
        if let Some(overrides) = self.grids.get(family.short_name()) {
            for (name, values) in overrides {
                let values: Vec<Value> = values.iter().map(none_to_null).collect();
                match grid.axes.iter_mut().find(|a| &a.name == name) {
                    Some(axis) => axis.values = values,
                    None => grid.axes.push(GridAxis::new(name, values)),
                }
            }
        }
        ParamGrid::new(grid.base, grid.axes)
            .map_err(|e| ConfigError::Invalid(format!("grids.{}: {e}", family.short_name())))
    }

    /// Pretty JSON of the full configuration.
    pub fn snapshot_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the configuration with the data and output paths blanked, so
    /// the same experiment hashes equal wherever it runs.
    pub fn fingerprint(&self) -> String {
        let mut portable = self.clone();
        portable.data = PathBuf::new();
        portable.out = PathBuf::new();
        let json = serde_json::to_string(&portable).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use harlab::classifiers::ModelParams;

    #[test]
    fn empty_file_gives_protocol_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.protocol.folds, 5);
        assert_eq!(c.protocol.welch_subsamples, 10);
        assert_eq!(c.stages.stages().len(), 7);
    }

    #[test]
    fn best_specs_parse_from_toml() {
        let c = ExperimentConfig::from_toml_str(
            "[best.svm]\nfamily = \"svm\"\nkernel = \"rbf\"\nc = 10\n\n[best.dt]\nfamily = \"decision_tree\"\n",
        )
        .unwrap();
        match &c.best.svm.params {
            ModelParams::Svm(p) => assert_eq!((p.kernel, p.c), (KernelKind::Rbf, 10.0)),
            other => panic!("{other:?}"),
        }
        match &c.best.dt.params {
            ModelParams::DecisionTree(p) => assert_eq!(p.max_depth, None),
            other => panic!("{other:?}"),
        }
        assert_eq!(c.best.lr, BestSpecs::default().lr);
    }

    #[test]
    fn rejects_mismatched_best_family() {
        let err = ExperimentConfig::from_toml_str("[best.svm]\nfamily = \"decision_tree\"\n").unwrap_err();
        assert!(err.to_string().contains("best.svm"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml_str("sede = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[protocol]\nfolds = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[protocol]\nalpha = 1.5").is_err());
        assert!(ExperimentConfig::from_toml_str("[protocol]\nsignificance_models = [\"svm\", \"svm\"]").is_err());
        assert!(ExperimentConfig::from_toml_str("[grids.xyz]\nc = [1]").is_err());
        assert!(ExperimentConfig::from_toml_str("[grids.svm]\nc = []").is_err());
        assert!(ExperimentConfig::from_toml_str("[checksums]\n\"a\" = \"xyz\"").is_err());
    }

    #[test]
    fn grid_overrides_replace_and_extend_axes() {
        let c = ExperimentConfig::from_toml_str(
            "[grids.rf]\nn_estimators = [5]\nmax_depth = [\"none\", 3]\nfeatures_per_split = [2]\n",
        )
        .unwrap();
        let g = c.param_grid(ModelFamily::RandomForest).unwrap();
        assert_eq!(g.cardinality(), 2 * 2);
        assert_eq!(g.axes.last().unwrap().name, "features_per_split");
        let depth = g.axes.iter().find(|a| a.name == "max_depth").unwrap();
        assert_eq!(depth.values, vec![Value::Null, serde_json::json!(3)]);
        assert_eq!(g.base.seed, c.model_seed(ModelFamily::RandomForest));
    }

    #[test]
    fn stage_names_and_dependencies() {
        let t = StageToggles::from_names(&["welch"]).unwrap();
        assert!(!t.evaluate);
        assert_eq!(t.stages(), vec![Stage::Evaluate, Stage::Welch]);
        let s = StageToggles::from_names(&["significance", "sweep_features"]).unwrap();
        assert_eq!(s.stages(), vec![Stage::SweepFeatures, Stage::Evaluate, Stage::Welch, Stage::Cv52]);
        assert!(StageToggles::from_names(&["plot"]).is_err());
    }

    #[test]
    fn fingerprint_ignores_paths_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        b.data = "/mnt/har".into();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn model_seeds_differ_by_family_and_master() {
        let c = ExperimentConfig::default();
        let seeds: Vec<u64> = ModelFamily::ALL.iter().map(|&f| c.model_seed(f)).collect();
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 5);
        assert_eq!(c.best_spec(ModelFamily::NeuralNet).seed, seeds[3]);
    }
}
