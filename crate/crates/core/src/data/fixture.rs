//! Small synthetic stand-in for the UCI HAR data.
//!
//! Six activities, 20 features, 30 subjects (1..=21 train, 22..=30 test, as in
//! the published subject split). Records are Gaussian around per-activity
//! centers with a per-subject offset. Feature 0 plays the role of
//! `tBodyAccMag-mean()`: high for walking activities, low for postures. Sitting
//! and standing share most of their center, so they are the confusable pair;
//! the last eight features are pure noise. All values are min-max scaled to
//! `[-1, 1]` and rounded to eight significant digits, so the in-memory fixture
//! equals what the text reader parses back from [`super::write_har_layout`].

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ActivityLabel, LabeledDataset, TestSplit, TrainSplit};
use crate::rng::{derive_seed, rng_from_seed};

pub const FIXTURE_SEED: u64 = 20_240_611;
pub const FIXTURE_FEATURES: usize = 20;
const INFORMATIVE: usize = 12;
const TRAIN_SUBJECTS: u16 = 21;

fn feature_names() -> Vec<String> {
    let mut names = vec!["tBodyAccMag-mean()".to_string()];
    names.extend((1..INFORMATIVE).map(|j| format!("synth-signal-{j}")));
    names.extend((INFORMATIVE..FIXTURE_FEATURES).map(|j| format!("synth-noise-{j}")));
    names
}

/// Activity centers on the informative features.
fn centers(seed: u64) -> [[f64; INFORMATIVE]; 6] {
    let mut rng = rng_from_seed(derive_seed(seed, "fixture_centers", 0));
    let mut out = [[0.0; INFORMATIVE]; 6];
    for (c, row) in out.iter_mut().enumerate() {
        let label = ActivityLabel::ALL[c];
        row[0] = if label.is_dynamic() { 2.0 } else { -2.0 };
        for v in row.iter_mut().skip(1) {
            *v = 1.2 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    // Standing drifts only slightly away from sitting.
    for j in 1..INFORMATIVE {
        let sitting = out[ActivityLabel::Sitting.index()][j];
        let standing = &mut out[ActivityLabel::Standing.index()][j];
        *standing = sitting + 0.35 * (*standing - sitting);
    }
    out
}

fn round_sig8(v: f64) -> f64 {
    format!("{v:.7e}").parse().expect("formatted float parses")
}

/// Generate the train/test fixture deterministically from `seed`.
pub fn synthetic_har(seed: u64) -> (TrainSplit, TestSplit) {
    let centers = centers(seed);
    let mut rng = rng_from_seed(derive_seed(seed, "fixture_rows", 0));
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut subjects = Vec::new();
    for subject in 1..=30u16 {
        let offset: Vec<f64> = (0..FIXTURE_FEATURES)
            .map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for label in ActivityLabel::ALL {
            let reps = 3 + rng.gen_range(0..2);
            for _ in 0..reps {
                let row: Vec<f64> = (0..FIXTURE_FEATURES)
                    .map(|j| {
                        let center = if j < INFORMATIVE { centers[label.index()][j] } else { 0.0 };
                        center + offset[j] + rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                rows.push(row);
                labels.push(label);
                subjects.push(subject);
            }
        }
    }
    let n = rows.len();
    let mut x = Array2::from_shape_fn((n, FIXTURE_FEATURES), |(i, j)| rows[i][j]);
    for mut col in x.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        col.mapv_inplace(|v| round_sig8((2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)));
    }
    let all = LabeledDataset::new(x, labels, subjects, feature_names()).expect("fixture is valid");
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| all.subjects()[i] <= TRAIN_SUBJECTS);
    (
        TrainSplit::new(all.subset(&train_rows)),
        TestSplit::new(all.subset(&test_rows)),
    )
}
