use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    DecisionTree,
    RandomForest,
    Svm,
    LogisticRegression,
    NeuralNet,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::DecisionTree,
        ModelFamily::RandomForest,
        ModelFamily::Svm,
        ModelFamily::NeuralNet,
        ModelFamily::LogisticRegression,
    ];

    /// Short identifier used in reports and on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            ModelFamily::DecisionTree => "dt",
            ModelFamily::RandomForest => "rf",
            ModelFamily::Svm => "svm",
            ModelFamily::LogisticRegression => "lr",
            ModelFamily::NeuralNet => "ann",
        }
    }

    pub fn from_short_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.short_name() == name)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelFamily::DecisionTree => "DT",
            ModelFamily::RandomForest => "RF",
            ModelFamily::Svm => "SVM",
            ModelFamily::LogisticRegression => "LR",
            ModelFamily::NeuralNet => "ANN",
        }
    }

    pub fn has_probabilities(self) -> bool {
        matches!(
            self,
            ModelFamily::RandomForest | ModelFamily::LogisticRegression | ModelFamily::NeuralNet
        )
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    L1,
    L2,
}

/// `max_depth: None` grows until leaves are pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            max_depth: None,
        }
    }
}

/// `features_per_split: None` means floor(sqrt(D)), at least 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub criterion: Criterion,
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            n_estimators: 100,
            max_depth: None,
            features_per_split: None,
        }
    }
}

/// `gamma: None` selects 1 / (D * mean per-feature variance) of the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub kernel: KernelKind,
    pub c: f64,
    pub gamma: Option<f64>,
    pub coef0: f64,
    pub tolerance: f64,
    /// The solver stops after `max_passes * n` working-set updates.
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            c: 1.0,
            gamma: None,
            coef0: 0.0,
            tolerance: 1e-3,
            max_passes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegParams {
    pub regularizer: Regularizer,
    pub c: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            regularizer: Regularizer::L2,
            c: 1.0,
            max_iter: 500,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden_sizes: Vec<usize>,
    pub alpha: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub max_epochs: usize,
    /// `None` means min(200, N).
    pub batch_size: Option<usize>,
    pub shuffle_each_epoch: bool,
    /// Stop once the epoch loss has failed to improve by `tol` for
    /// `n_iter_no_change` consecutive epochs. `None` always runs `max_epochs`.
    pub tol: Option<f64>,
    pub n_iter_no_change: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![100],
            alpha: 1e-4,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            max_epochs: 200,
            batch_size: None,
            shuffle_each_epoch: true,
            tol: Some(1e-4),
            n_iter_no_change: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    Svm(SvmParams),
    LogisticRegression(LogRegParams),
    NeuralNet(MlpParams),
}

impl ModelParams {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelParams::DecisionTree(_) => ModelFamily::DecisionTree,
            ModelParams::RandomForest(_) => ModelFamily::RandomForest,
            ModelParams::Svm(_) => ModelFamily::Svm,
            ModelParams::LogisticRegression(_) => ModelFamily::LogisticRegression,
            ModelParams::NeuralNet(_) => ModelFamily::NeuralNet,
        }
    }

    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::DecisionTree => ModelParams::DecisionTree(TreeParams::default()),
            ModelFamily::RandomForest => ModelParams::RandomForest(ForestParams::default()),
            ModelFamily::Svm => ModelParams::Svm(SvmParams::default()),
            ModelFamily::LogisticRegression => ModelParams::LogisticRegression(LogRegParams::default()),
            ModelFamily::NeuralNet => ModelParams::NeuralNet(MlpParams::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        let positive = |name: &str, v: f64| -> Result<(), ModelError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidParams(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let depth = |d: Option<usize>| -> Result<(), ModelError> {
            match d {
                Some(0) => Err(ModelError::InvalidParams(
                    "max_depth must be positive; omit it for unbounded depth".into(),
                )),
                _ => Ok(()),
            }
        };
        match self {
            ModelParams::DecisionTree(p) => depth(p.max_depth),
            ModelParams::RandomForest(p) => {
                depth(p.max_depth)?;
                if p.n_estimators == 0 {
                    return bad("n_estimators must be at least 1".into());
                }
                if p.features_per_split == Some(0) {
                    return bad("features_per_split must be at least 1".into());
                }
                Ok(())
            }
            ModelParams::Svm(p) => {
                positive("c", p.c)?;
                if let Some(g) = p.gamma {
                    positive("gamma", g)?;
                }
                if !p.coef0.is_finite() {
                    return bad(format!("coef0 must be finite, got {}", p.coef0));
                }
                positive("tolerance", p.tolerance)?;
                if p.max_passes == 0 {
                    return bad("max_passes must be at least 1".into());
                }
                Ok(())
            }
            ModelParams::LogisticRegression(p) => {
                positive("c", p.c)?;
                positive("tolerance", p.tolerance)?;
                if p.max_iter == 0 {
                    return bad("max_iter must be at least 1".into());
                }
                Ok(())
            }
            ModelParams::NeuralNet(p) => {
                if p.hidden_sizes.is_empty() || p.hidden_sizes.contains(&0) {
                    return bad(format!("hidden_sizes must be non-empty and positive, got {:?}", p.hidden_sizes));
                }
                if !(p.alpha.is_finite() && p.alpha >= 0.0) {
                    return bad(format!("alpha must be non-negative, got {}", p.alpha));
                }
                positive("learning_rate", p.learning_rate)?;
                for (name, b) in [("beta1", p.beta1), ("beta2", p.beta2)] {
                    if !(b > 0.0 && b < 1.0) {
                        return bad(format!("{name} must lie in (0, 1), got {b}"));
                    }
                }
                if p.max_epochs == 0 {
                    return bad("max_epochs must be at least 1".into());
                }
                if p.batch_size == Some(0) {
                    return bad("batch_size must be at least 1".into());
                }
                if let Some(t) = p.tol {
                    positive("tol", t)?;
                }
                Ok(())
            }
        }
    }
}

/// A classifier configuration: family parameters plus the seed for any
/// randomness during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(params: ModelParams, seed: u64) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(Self { params, seed })
    }

    pub fn family(&self) -> ModelFamily {
        self.params.family()
    }

    pub fn tree(params: TreeParams) -> Result<Self, ModelError> {
        Self::new(ModelParams::DecisionTree(params), 0)
    }

    pub fn forest(params: ForestParams, seed: u64) -> Result<Self, ModelError> {
        Self::new(ModelParams::RandomForest(params), seed)
    }

    pub fn svm(params: SvmParams) -> Result<Self, ModelError> {
        Self::new(ModelParams::Svm(params), 0)
    }

    pub fn logreg(params: LogRegParams) -> Result<Self, ModelError> {
        Self::new(ModelParams::LogisticRegression(params), 0)
    }

    pub fn mlp(params: MlpParams, seed: u64) -> Result<Self, ModelError> {
        Self::new(ModelParams::NeuralNet(params), seed)
    }

    /// Compact `key=value` rendering of the parameters that grids vary.
    pub fn describe(&self) -> String {
        let depth = |d: Option<usize>| d.map_or_else(|| "none".to_string(), |d| d.to_string());
        let crit = |c: Criterion| match c {
            Criterion::Gini => "gini",
            Criterion::Entropy => "entropy",
        };
        match &self.params {
            ModelParams::DecisionTree(p) => format!("criterion={} max_depth={}", crit(p.criterion), depth(p.max_depth)),
            ModelParams::RandomForest(p) => format!(
                "criterion={} n_estimators={} max_depth={}",
                crit(p.criterion),
                p.n_estimators,
                depth(p.max_depth)
            ),
            ModelParams::Svm(p) => {
                let kernel = match p.kernel {
                    KernelKind::Linear => "linear",
                    KernelKind::Rbf => "rbf",
                    KernelKind::Sigmoid => "sigmoid",
                };
                format!("kernel={kernel} c={}", p.c)
            }
            ModelParams::LogisticRegression(p) => {
                let reg = match p.regularizer {
                    Regularizer::L1 => "l1",
                    Regularizer::L2 => "l2",
                };
                format!("regularizer={reg} c={}", p.c)
            }
            ModelParams::NeuralNet(p) => format!(
                "hidden_sizes={:?} alpha={} learning_rate={} beta1={} beta2={}",
                p.hidden_sizes, p.alpha, p.learning_rate, p.beta1, p.beta2
            ),
        }
    }
}
