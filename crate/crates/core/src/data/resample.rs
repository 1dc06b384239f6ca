//! Stratified resampling: k-fold plans, fractional subsamples and 2-fold halves.
//!
//! Every function is a pure function of (dataset labels, parameters, seed).
//! Rows of each class are shuffled with a generator seeded from
//! `derive_seed(seed, <tag>, class code)`, so classes never share random state.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ActivityLabel, DataError, LabeledDataset};
use crate::rng::{derive_seed, rng_from_seed};

/// Assignment of every row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n_rows(&self) -> usize {
        self.assignments.len()
    }

    /// Rows of fold `fold`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// Rows outside fold `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// Hex SHA-256 of `k` and the assignment vector; equal plans hash equal.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        for &a in &self.assignments {
            h.update((a as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn shuffled_class_rows(ds: &LabeledDataset, seed: u64, tag: &str) -> [Vec<usize>; 6] {
    let mut by_class = ds.indices_by_class();
    for label in ActivityLabel::ALL {
        let rows = &mut by_class[label.index()];
        let mut rng = rng_from_seed(derive_seed(seed, tag, u64::from(label.code())));
        rows.shuffle(&mut rng);
    }
    by_class
}

/// Stratified k-fold plan.
///
/// Fold sizes differ by at most one (the first `N mod k` folds are the larger
/// ones). Class `c` puts `floor(n_c / k)` rows in every fold and its
/// `n_c mod k` extra rows in distinct folds, so its per-fold counts differ by at
/// most one. Which folds receive the extras is solved as a small bipartite
/// matching so that, in addition, every count stays within one row of its
/// proportional share `|fold| * n_c / N`.
pub fn stratified_kfold(ds: &LabeledDataset, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::InvalidFoldCount(k));
    }
    if ds.is_empty() {
        return Err(DataError::Empty);
    }
    let counts = ds.class_counts();
    for label in ActivityLabel::ALL {
        let c = counts[label.index()];
        if c > 0 && c < k {
            return Err(DataError::ClassTooSmall {
                label,
                count: c,
                required: k,
            });
        }
    }
    let per_fold = fold_class_counts(&counts, k);
    let by_class = shuffled_class_rows(ds, seed, "stratified_kfold");
    let mut assignments = vec![0; ds.n_rows()];
    for (c, rows) in by_class.iter().enumerate() {
        let mut next = rows.iter();
        for (fold, fold_counts) in per_fold.iter().enumerate() {
            for &row in next.by_ref().take(fold_counts[c]) {
                assignments[row] = fold;
            }
        }
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// Rows of each class per fold, `out[fold][class]`.
fn fold_class_counts(counts: &[usize; 6], k: usize) -> Vec<[usize; 6]> {
    let n: usize = counts.iter().sum();
    let large = n % k;
    let size = |f: usize| n / k + usize::from(f < large);
    let total_extra: usize = counts.iter().map(|c| c % k).sum();
    let fold_extra = |f: usize| total_extra / k + usize::from(f < total_extra % k);

    // extra[c][f]: Some(true) forced, Some(false) forbidden, None free.
    // With q = floor(n_c / k) and share t = size(f) * n_c / N, one extra row is
    // required when t > q + 1 and forbidden when t < q.
    let mut forced = vec![[false; 6]; k];
    let mut allowed = vec![[false; 6]; k];
    let mut need_class = [0usize; 6];
    let mut need_fold: Vec<usize> = (0..k).map(fold_extra).collect();
    for (c, &nc) in counts.iter().enumerate() {
        let (q, r) = (nc / k, nc % k);
        need_class[c] = r;
        if r == 0 {
            continue;
        }
        for f in 0..k {
            let share = size(f) * nc;
            if share > (q + 1) * n {
                forced[f][c] = true;
                need_class[c] -= 1;
                need_fold[f] -= 1;
            } else if share >= q * n {
                allowed[f][c] = true;
            }
        }
    }
    let matched = match_extras(&need_class, &mut need_fold, &allowed);

    let mut out = vec![[0usize; 6]; k];
    for (f, row) in out.iter_mut().enumerate() {
        for (c, &nc) in counts.iter().enumerate() {
            row[c] = nc / k + usize::from(forced[f][c] || matched[f][c]);
        }
    }
    out
}

/// Bipartite b-matching of class extras onto folds by augmenting paths.
/// Returns `chosen[fold][class]`.
fn match_extras(need_class: &[usize; 6], need_fold: &mut [usize], allowed: &[[bool; 6]]) -> Vec<[bool; 6]> {
    let k = need_fold.len();
    let mut chosen = vec![[false; 6]; k];
    let mut fold_load = vec![0usize; k];

    fn augment(
        c: usize,
        allowed: &[[bool; 6]],
        chosen: &mut [[bool; 6]],
        fold_load: &mut [usize],
        need_fold: &[usize],
        seen: &mut [bool],
    ) -> bool {
        for f in 0..chosen.len() {
            if !allowed[f][c] || chosen[f][c] || seen[f] {
                continue;
            }
            seen[f] = true;
            if fold_load[f] < need_fold[f] {
                chosen[f][c] = true;
                fold_load[f] += 1;
                return true;
            }
            // Fold is full: try to move one of its classes elsewhere.
            for other in 0..6 {
                if chosen[f][other] && augment(other, allowed, chosen, fold_load, need_fold, seen) {
                    chosen[f][other] = false;
                    chosen[f][c] = true;
                    return true;
                }
            }
        }
        false
    }

    for c in 0..6 {
        for _ in 0..need_class[c] {
            let mut seen = vec![false; k];
            let ok = augment(c, allowed, &mut chosen, &mut fold_load, need_fold, &mut seen);
            assert!(ok, "no stratified fold layout for class index {c}");
        }
    }
    chosen
}

/// Per-class quotas for a stratified `fraction` of `counts`.
///
/// Each class first gets `floor(fraction * n_c)`; the rows still needed to reach
/// `round(fraction * N)` go one each to the classes with the largest fractional
/// parts, ties to the smaller class code.
pub fn stratified_quotas(counts: &[usize; 6], fraction: f64) -> [usize; 6] {
    let total: usize = counts.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let mut quotas = [0usize; 6];
    let mut remainders = Vec::new();
    for (i, &n) in counts.iter().enumerate() {
        let exact = fraction * n as f64;
        quotas[i] = (exact.floor() as usize).min(n);
        if quotas[i] < n {
            remainders.push((exact - exact.floor(), i));
        }
    }
    let assigned: usize = quotas.iter().sum();
    let mut missing = target.saturating_sub(assigned);
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(frac, i) in &remainders {
        if missing == 0 || frac <= 0.0 {
            break;
        }
        quotas[i] += 1;
        missing -= 1;
    }
    quotas
}

/// Row indices (ascending) of a stratified subsample without replacement.
pub fn stratified_subsample_indices(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    if ds.is_empty() {
        return Err(DataError::Empty);
    }
    let counts = ds.class_counts();
    let quotas = stratified_quotas(&counts, fraction);
    for label in ActivityLabel::ALL {
        let i = label.index();
        if counts[i] > 0 && quotas[i] == 0 {
            return Err(DataError::ClassTooSmall {
                label,
                count: counts[i],
                required: (1.0 / fraction).ceil() as usize,
            });
        }
    }
    let by_class = shuffled_class_rows(ds, seed, "stratified_subsample");
    let mut rows: Vec<usize> = by_class
        .iter()
        .zip(quotas)
        .flat_map(|(rows, q)| rows[..q].iter().copied())
        .collect();
    rows.sort_unstable();
    Ok(rows)
}

pub fn stratified_subsample(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<LabeledDataset, DataError> {
    Ok(ds.subset(&stratified_subsample_indices(ds, fraction, seed)?))
}

/// Stratified disjoint halves (ascending row indices). A class with an odd count
/// puts its extra row alternately in the first and second half, so the half
/// sizes differ by at most one.
pub fn split_half_indices(ds: &LabeledDataset, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    let counts = ds.class_counts();
    for label in ActivityLabel::ALL {
        let c = counts[label.index()];
        if c == 1 {
            return Err(DataError::ClassTooSmall {
                label,
                count: 1,
                required: 2,
            });
        }
    }
    if ds.is_empty() {
        return Err(DataError::Empty);
    }
    let by_class = shuffled_class_rows(ds, seed, "split_half");
    let (mut first, mut second) = (Vec::new(), Vec::new());
    let mut odd_seen = 0;
    for rows in &by_class {
        let mut cut = rows.len() / 2;
        if rows.len() % 2 == 1 {
            if odd_seen % 2 == 0 {
                cut += 1;
            }
            odd_seen += 1;
        }
        first.extend_from_slice(&rows[..cut]);
        second.extend_from_slice(&rows[cut..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

pub fn split_half(ds: &LabeledDataset, seed: u64) -> Result<(LabeledDataset, LabeledDataset), DataError> {
    let (a, b) = split_half_indices(ds, seed)?;
    Ok((ds.subset(&a), ds.subset(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn labeled(codes: &[u8]) -> LabeledDataset {
        let n = codes.len();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let labels = codes
            .iter()
            .map(|&c| ActivityLabel::from_code(i64::from(c)).unwrap())
            .collect();
        LabeledDataset::from_parts(x, labels).unwrap()
    }

    fn per_fold_class_counts(ds: &LabeledDataset, plan: &FoldPlan) -> Vec<[usize; 6]> {
        let mut out = vec![[0; 6]; plan.k];
        for (row, &f) in plan.assignments.iter().enumerate() {
            out[f][ds.labels()[row].index()] += 1;
        }
        out
    }

    #[test]
    fn exact_division_gives_identical_folds() {
        let ds = labeled(&[1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2]);
        let plan = stratified_kfold(&ds, 3, 9).unwrap();
        for counts in per_fold_class_counts(&ds, &plan) {
            assert_eq!(counts[0], 2);
            assert_eq!(counts[1], 2);
        }
        assert_eq!(plan, stratified_kfold(&ds, 3, 9).unwrap());
    }

    #[test]
    fn kfold_rejects_rare_class_and_bad_k() {
        let ds = labeled(&[1, 1, 1, 2, 2]);
        match stratified_kfold(&ds, 3, 0) {
            Err(DataError::ClassTooSmall { label, count, required }) => {
                assert_eq!((label, count, required), (ActivityLabel::WalkingUpstairs, 2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(stratified_kfold(&ds, 1, 0), Err(DataError::InvalidFoldCount(1))));
    }

    #[test]
    fn full_fraction_keeps_every_row() {
        let ds = labeled(&[1, 2, 3, 3, 4, 5, 6, 6]);
        let rows = stratified_subsample_indices(&ds, 1.0, 3).unwrap();
        assert_eq!(rows, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn quotas_distribute_remainders_to_largest_fractions() {
        // Class counts of the published test split.
        let counts = [496, 471, 420, 491, 532, 537];
        let q = stratified_quotas(&counts, 0.5);
        // floor sum is 1472; round(1473.5) = 1474 needs two more rows, which go
        // to the tied .5 remainders of the smallest codes (2 and 4).
        assert_eq!(q, [248, 236, 210, 246, 266, 268]);
        assert_eq!(q.iter().sum::<usize>(), 1474);
    }

    #[test]
    fn subsample_rejects_vanishing_class() {
        let ds = labeled(&[1, 1, 1, 1, 2]);
        assert!(matches!(
            stratified_subsample(&ds, 0.2, 0),
            Err(DataError::ClassTooSmall { label: ActivityLabel::WalkingUpstairs, .. })
        ));
        assert!(matches!(stratified_subsample(&ds, 0.0, 0), Err(DataError::InvalidFraction(_))));
        assert!(matches!(stratified_subsample(&ds, 1.5, 0), Err(DataError::InvalidFraction(_))));
    }

    #[test]
    fn different_seeds_pick_different_rows_with_same_counts() {
        let codes: Vec<u8> = (0..120).map(|i| (i % 6 + 1) as u8).collect();
        let ds = labeled(&codes);
        let a = stratified_subsample_indices(&ds, 0.5, 0).unwrap();
        let b = stratified_subsample_indices(&ds, 0.5, 1).unwrap();
        assert_ne!(a, b);
        assert_eq!(ds.subset(&a).class_counts(), ds.subset(&b).class_counts());
    }

    #[test]
    fn four_rows_split_one_per_class_per_half() {
        let ds = labeled(&[1, 2, 1, 2]);
        let (a, b) = split_half(&ds, 5).unwrap();
        assert_eq!(a.class_counts(), [1, 1, 0, 0, 0, 0]);
        assert_eq!(b.class_counts(), [1, 1, 0, 0, 0, 0]);
        assert!(matches!(split_half(&labeled(&[1, 1, 2]), 0), Err(DataError::ClassTooSmall { .. })));
    }

    fn codes_strategy() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(1u8..=6, 30..300)
    }

    proptest! {
        #[test]
        fn kfold_is_a_stratified_partition(codes in codes_strategy(), k in 2usize..7, seed: u64) {
            let ds = labeled(&codes);
            let counts = ds.class_counts();
            prop_assume!(counts.iter().all(|&c| c == 0 || c >= k));
            let plan = stratified_kfold(&ds, k, seed).unwrap();
            prop_assert_eq!(&plan, &stratified_kfold(&ds, k, seed).unwrap());

            // Partition: folds concatenated reproduce the row multiset.
            let mut all: Vec<usize> = (0..k).flat_map(|f| plan.test_indices(f)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.n_rows()).collect::<Vec<_>>());

            let sizes = plan.fold_sizes();
            prop_assert!(sizes.iter().all(|&s| s > 0));
            let per_fold = per_fold_class_counts(&ds, &plan);
            let n = ds.n_rows() as f64;
            for c in 0..6 {
                let col: Vec<usize> = per_fold.iter().map(|f| f[c]).collect();
                let spread = col.iter().max().unwrap() - col.iter().min().unwrap();
                prop_assert!(spread <= 1);
                for (f, &size) in sizes.iter().enumerate() {
                    let size = size as f64;
                    let gap = (per_fold[f][c] as f64 / size - counts[c] as f64 / n).abs();
                    prop_assert!(gap <= 1.0 / size + 1e-12, "fold {} class {} gap {}", f, c, gap);
                }
            }
        }

        #[test]
        fn subsample_preserves_class_proportions(codes in codes_strategy(), frac in 0.2f64..1.0, seed: u64) {
            let ds = labeled(&codes);
            let counts = ds.class_counts();
            let Ok(rows) = stratified_subsample_indices(&ds, frac, seed) else {
                // Only a class too small for the fraction may fail.
                prop_assert!(counts.iter().any(|&c| c > 0 && (frac * c as f64) < 1.0));
                return Ok(());
            };
            let mut dedup = rows.clone();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), rows.len());
            let sub = ds.subset(&rows);
            let got = sub.class_counts();
            let m = rows.len() as f64;
            for c in 0..6 {
                prop_assert!((got[c] as f64 - frac * counts[c] as f64).abs() < 1.0 + 1e-9);
                let gap = (got[c] as f64 / m - counts[c] as f64 / ds.n_rows() as f64).abs();
                prop_assert!(gap <= 1.0 / m + 1e-12);
            }
            prop_assert_eq!(rows, stratified_subsample_indices(&ds, frac, seed).unwrap());
        }

        #[test]
        fn halves_partition_and_balance(codes in codes_strategy(), seed: u64) {
            let ds = labeled(&codes);
            prop_assume!(ds.class_counts().iter().all(|&c| c != 1));
            let (a, b) = split_half_indices(&ds, seed).unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.n_rows()).collect::<Vec<_>>());
            prop_assert!(a.len().abs_diff(b.len()) <= 1);
            let (ca, cb) = (ds.subset(&a).class_counts(), ds.subset(&b).class_counts());
            for c in 0..6 {
                prop_assert!(ca[c].abs_diff(cb[c]) <= 1);
            }
        }
    }
}
