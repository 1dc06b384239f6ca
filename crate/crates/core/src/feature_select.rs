//! Univariate feature ranking by the one-way ANOVA F statistic.
//!
//! For a feature with class groups `g` of size `n_g`, group means `m_g` and
//! grand mean `m`:
//!
//! ```text
//! F = [sum_g n_g (m_g - m)^2 / (K - 1)] / [sum_g sum_i (x_gi - m_g)^2 / (N - K)]
//! ```
//!
//! A zero denominator is never divided by: a feature whose groups are each
//! constant but differ from one another gets the `infinite` flag, and a feature
//! that is constant everywhere gets `F = 0` and the `constant` flag.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledDataset;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("ANOVA needs at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("ANOVA needs more rows ({rows}) than classes ({classes})")]
    TooFewRows { rows: usize, classes: usize },
    #[error("k = {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature_index: usize,
    /// Finite F value; meaningless (set to 0) when `infinite` is set.
    pub f_value: f64,
    pub infinite: bool,
    pub constant: bool,
    /// (between, within) degrees of freedom: (K - 1, N - K).
    pub degrees_of_freedom: (usize, usize),
}

impl FeatureScore {
    /// Total order used for ranking: infinite first, then larger F, constant
    /// features after every non-constant one, then lower index.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .infinite
            .cmp(&self.infinite)
            .then(self.constant.cmp(&other.constant))
            .then(other.f_value.total_cmp(&self.f_value))
            .then(self.feature_index.cmp(&other.feature_index))
    }
}

/// F score of every feature, in feature order.
pub fn anova_f_scores(ds: &LabeledDataset) -> Result<Vec<FeatureScore>, FeatureError> {
    let groups: Vec<Vec<usize>> = ds
        .indices_by_class()
        .into_iter()
        .filter(|g| !g.is_empty())
        .collect();
    let k = groups.len();
    let n = ds.n_rows();
    if k < 2 {
        return Err(FeatureError::TooFewClasses(k));
    }
    if n <= k {
        return Err(FeatureError::TooFewRows { rows: n, classes: k });
    }
    let x = ds.features();
    let scores = (0..ds.n_features())
        .into_par_iter()
        .map(|j| {
            let col = x.column(j);
            let values: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| g.iter().map(|&i| col[i]).collect())
                .collect();
            score_groups(j, &values, n)
        })
        .collect();
    Ok(scores)
}

fn score_groups(feature_index: usize, groups: &[Vec<f64>], n: usize) -> FeatureScore {
    let k = groups.len();
    let df = (k - 1, n - k);
    let mut means = Vec::with_capacity(k);
    let mut ss_within = 0.0;
    let mut all_groups_constant = true;
    for g in groups {
        let first = g[0];
        if g.iter().all(|&v| v == first) {
            means.push(first);
            continue;
        }
        all_groups_constant = false;
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss_within += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        means.push(mean);
    }
    let means_equal = means.iter().all(|&m| m == means[0]);
    let ss_between = if means_equal {
        0.0
    } else {
        let grand = groups.iter().flatten().sum::<f64>() / n as f64;
        groups
            .iter()
            .zip(&means)
            .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
            .sum()
    };
    let score = |f_value, infinite, constant| FeatureScore {
        feature_index,
        f_value,
        infinite,
        constant,
        degrees_of_freedom: df,
    };
    if all_groups_constant {
        if means_equal {
            score(0.0, false, true)
        } else {
            score(0.0, true, false)
        }
    } else {
        let between = ss_between / df.0 as f64;
        let within = ss_within / df.1 as f64;
        score(between / within, false, false)
    }
}

/// Indices of the `k` best-ranked features, best first.
pub fn select_top_k(scores: &[FeatureScore], k: usize) -> Result<Vec<usize>, FeatureError> {
    if k == 0 || k > scores.len() {
        return Err(FeatureError::KOutOfRange { k, max: scores.len() });
    }
    let mut ranked: Vec<&FeatureScore> = scores.iter().collect();
    ranked.sort_by(|a, b| a.rank_cmp(b));
    Ok(ranked.into_iter().take(k).map(|s| s.feature_index).collect())
}

/// CSV with columns `feature_index,feature_name,f_value,rank` (rank 1 is best;
/// infinite scores print as `inf`).
pub fn write_scores_csv<W: Write>(
    mut out: W,
    scores: &[FeatureScore],
    names: &[String],
) -> std::io::Result<()> {
    let mut ranked: Vec<&FeatureScore> = scores.iter().collect();
    ranked.sort_by(|a, b| a.rank_cmp(b));
    let mut rank = vec![0; scores.len()];
    for (r, s) in ranked.iter().enumerate() {
        rank[s.feature_index] = r + 1;
    }
    writeln!(out, "feature_index,feature_name,f_value,rank")?;
    for s in scores {
        let name = names.get(s.feature_index).map(String::as_str).unwrap_or("");
        let f = if s.infinite { "inf".to_string() } else { format!("{}", s.f_value) };
        writeln!(out, "{},\"{}\",{},{}", s.feature_index, name.replace('"', "\"\""), f, rank[s.feature_index])?;
    }
    Ok(())
}
