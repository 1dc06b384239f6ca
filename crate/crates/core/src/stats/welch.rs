use serde::{Deserialize, Serialize};

use super::{check_alpha, degenerate, regular, StatsError, TestMethod, TestResult};

/// Repeated evaluation scores (typically accuracies) of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    pub model_id: String,
    pub scores: Vec<f64>,
}

impl ScoreSample {
    pub fn new(model_id: impl Into<String>, scores: Vec<f64>) -> Self {
        Self {
            model_id: model_id.into(),
            scores,
        }
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.n() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (self.n() as f64 - 1.0)
    }

    fn validate(&self) -> Result<(), StatsError> {
        if self.n() < 2 {
            return Err(StatsError::TooFewScores {
                model_id: self.model_id.clone(),
                n: self.n(),
            });
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(StatsError::NonFiniteScore {
                model_id: self.model_id.clone(),
            });
        }
        Ok(())
    }
}

/// Two-sided Welch t-test of equal means with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &ScoreSample, b: &ScoreSample, alpha: f64) -> Result<TestResult, StatsError> {
    a.validate()?;
    b.validate()?;
    check_alpha(alpha)?;
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let (va, vb) = (a.variance() / na, b.variance() / nb);
    let diff = a.mean() - b.mean();
    let pooled = va + vb;
    if pooled == 0.0 {
        return Ok(degenerate(TestMethod::Welch, diff, na + nb - 2.0, alpha));
    }
    let t = diff / pooled.sqrt();
    let df = pooled * pooled / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(regular(TestMethod::Welch, t, df, alpha))
}
