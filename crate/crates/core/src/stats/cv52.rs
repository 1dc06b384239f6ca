//! The 5x2 cross-validated paired t-test.
//!
//! Five times, the data is split into stratified halves A and B. Both models
//! are trained on A and scored on B, then trained on B and scored on A, giving
//! accuracy differences `p1` and `p2` for the repetition. With the repetition
//! mean `m = (p1 + p2) / 2` and variance `s2 = (p1 - m)^2 + (p2 - m)^2`:
//!
//! ```text
//! t = p1 of repetition 1 / sqrt(mean of the five s2)     (5 degrees of freedom)
//! ```
//!
//! The numerator uses only the very first difference, so the statistic depends
//! on the order of the two models and on the split seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_alpha, degenerate, regular, StatsError, TestMethod, TestResult};
use crate::classifiers::{fit, ModelSpec};
use crate::data::{split_half, LabeledDataset};
use crate::metrics::accuracy_of;
use crate::rng::derive_seed;

pub const CV52_REPETITIONS: usize = 5;

/// Accuracy differences (model a minus model b), `[repetition][fold]`; fold 0
/// trains on the first half and tests on the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cv52Table {
    pub differences: [[f64; 2]; CV52_REPETITIONS],
    pub split_seeds: [u64; CV52_REPETITIONS],
}

/// The test statistic from a table of differences.
pub fn cv52_statistic(differences: &[[f64; 2]; CV52_REPETITIONS], alpha: f64) -> Result<TestResult, StatsError> {
    check_alpha(alpha)?;
    let variance_sum: f64 = differences
        .iter()
        .map(|[p1, p2]| {
            let mean = (p1 + p2) / 2.0;
            (p1 - mean).powi(2) + (p2 - mean).powi(2)
        })
        .sum();
    let numerator = differences[0][0];
    let df = CV52_REPETITIONS as f64;
    if variance_sum == 0.0 {
        return Ok(degenerate(TestMethod::Cv52, numerator, df, alpha));
    }
    let t = numerator / (variance_sum / df).sqrt();
    Ok(regular(TestMethod::Cv52, t, df, alpha))
}

/// Run the full procedure: 20 fits on seed-derived stratified halves of `ds`.
pub fn cv52_paired_t_test(
    spec_a: &ModelSpec,
    spec_b: &ModelSpec,
    ds: &LabeledDataset,
    seed: u64,
    alpha: f64,
) -> Result<TestResult, StatsError> {
    check_alpha(alpha)?;
    let split_seeds: [u64; CV52_REPETITIONS] = std::array::from_fn(|i| derive_seed(seed, "cv52", i as u64));
    let halves = split_seeds
        .iter()
        .enumerate()
        .map(|(repetition, &s)| split_half(ds, s).map_err(|source| StatsError::Data { repetition, source }))
        .collect::<Result<Vec<_>, _>>()?;

    // (repetition, fold, model) units, evaluated in parallel and collected in order.
    let units: Vec<(usize, usize, usize)> = (0..CV52_REPETITIONS)
        .flat_map(|r| (0..2).flat_map(move |f| (0..2).map(move |m| (r, f, m))))
        .collect();
    let accuracies = units
        .par_iter()
        .map(|&(repetition, fold, model)| {
            let (a, b) = &halves[repetition];
            let (train, test) = if fold == 0 { (a, b) } else { (b, a) };
            let spec = if model == 0 { spec_a } else { spec_b };
            let trained = fit(spec, train).map_err(|source| StatsError::Fit {
                repetition,
                fold,
                source,
            })?;
            let predicted = trained.predict(test.features()).map_err(|source| StatsError::Fit {
                repetition,
                fold,
                source,
            })?;
            Ok(accuracy_of(test.labels(), &predicted)?)
        })
        .collect::<Result<Vec<f64>, StatsError>>()?;

    let mut differences = [[0.0; 2]; CV52_REPETITIONS];
    for (i, pair) in accuracies.chunks_exact(2).enumerate() {
        differences[i / 2][i % 2] = pair[0] - pair[1];
    }
    let mut result = cv52_statistic(&differences, alpha)?;
    result.cv52_table = Some(Cv52Table {
        differences,
        split_seeds,
    });
    Ok(result)
}
