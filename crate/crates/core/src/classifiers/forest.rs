use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ForestParams;
use super::tree::{grow, majority, DecisionTree, TreeConfig};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub features_per_split: usize,
}

pub fn default_features_per_split(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

/// Seed of tree `t`; fixed before any tree is grown so parallel fitting is
/// schedule-independent.
pub fn tree_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, "forest-tree", t as u64)
}

pub(crate) fn fit_forest(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
) -> RandomForest {
    let n = y.len();
    let features_per_split = params
        .features_per_split
        .unwrap_or_else(|| default_features_per_split(x.ncols()))
        .min(x.ncols());
    let config = TreeConfig {
        criterion: params.criterion,
        max_depth: params.max_depth,
        features_per_split: Some(features_per_split),
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(tree_seed(seed, t));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow(x, y, n_classes, rows, &config, Some(&mut rng))
        })
        .collect();
    RandomForest {
        trees,
        features_per_split,
    }
}

impl RandomForest {
    /// Vote fractions, one row per sample.
    pub fn vote_fractions(&self, x: ArrayView2<'_, f64>, n_classes: usize) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), n_classes));
        let n_trees = self.trees.len() as f64;
        for (i, row) in x.outer_iter().enumerate() {
            let mut votes = vec![0usize; n_classes];
            for tree in &self.trees {
                votes[tree.predict_row(row)] += 1;
            }
            for (c, v) in votes.into_iter().enumerate() {
                out[[i, c]] = v as f64 / n_trees;
            }
        }
        out
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>, n_classes: usize) -> Vec<usize> {
        let fractions = self.vote_fractions(x, n_classes);
        fractions
            .outer_iter()
            .map(|row| majority(row.as_slice().expect("standard layout")))
            .collect()
    }
}
