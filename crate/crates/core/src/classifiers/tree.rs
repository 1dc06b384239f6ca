//! CART-style classification trees shared by the single tree and the forest.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::Criterion;
use super::ModelError;
use crate::rng::LabRng;

/// Gini (1 - sum p^2) or entropy (-sum p log2 p) of a class-count vector.
pub fn impurity(counts: &[f64], criterion: Criterion) -> Result<f64, ModelError> {
    let total: f64 = counts.iter().sum();
    if counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(ModelError::InvalidInput("class counts must be finite and non-negative".into()));
    }
    if total <= 0.0 {
        return Err(ModelError::InvalidInput("class counts sum to zero".into()));
    }
    Ok(impurity_unchecked(counts, total, criterion))
}

fn impurity_unchecked(counts: &[f64], total: f64, criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Gini => 1.0 - counts.iter().map(|&c| (c / total).powi(2)).sum::<f64>(),
        Criterion::Entropy => -counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| {
                let p = c / total;
                p * p.log2()
            })
            .sum::<f64>(),
    }
    .max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: usize,
    },
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict_row(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

pub(crate) struct TreeConfig {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    /// Candidate features examined per node; `None` examines all of them.
    pub features_per_split: Option<usize>,
}

/// Grows a tree over `rows` (duplicates allowed, as in a bootstrap sample).
/// `y` holds class indices below `n_classes`.
pub(crate) fn grow(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    n_classes: usize,
    rows: Vec<usize>,
    config: &TreeConfig,
    mut rng: Option<&mut LabRng>,
) -> DecisionTree {
    let mut builder = Builder {
        x,
        y,
        n_classes,
        config,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    builder.build(rows, 0, &mut rng);
    DecisionTree { nodes: builder.nodes }
}

struct Builder<'x, 'a> {
    x: ArrayView2<'x, f64>,
    y: &'a [usize],
    n_classes: usize,
    config: &'a TreeConfig,
    nodes: Vec<Node>,
    scratch: Vec<(f64, usize)>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_, '_> {
    fn counts(&self, rows: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &r in rows {
            counts[self.y[r]] += 1.0;
        }
        counts
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut Option<&mut LabRng>) -> usize {
        let counts = self.counts(&rows);
        let total = rows.len() as f64;
        let parent = impurity_unchecked(&counts, total, self.config.criterion);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
        });
        let depth_ok = self.config.max_depth.map_or(true, |m| depth < m);
        if rows.len() < 2 || parent <= 0.0 || !depth_ok {
            return id;
        }
        let candidates = self.candidate_features(&rows, rng);
        let Some(best) = self.best_split(&rows, &candidates, &counts, parent) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x[[r, best.feature]] <= best.threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn is_constant(&self, rows: &[usize], feature: usize) -> bool {
        let first = self.x[[rows[0], feature]];
        rows.iter().all(|&r| self.x[[r, feature]] == first)
    }

    /// All non-constant features, or for a forest a random draw of
    /// `features_per_split` of them. Features found constant in the node do
    /// not count towards the draw. Returned in increasing index order.
    fn candidate_features(&self, rows: &[usize], rng: &mut Option<&mut LabRng>) -> Vec<usize> {
        let d = self.x.ncols();
        let mut picked = match (self.config.features_per_split, rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut order: Vec<usize> = (0..d).collect();
                let mut picked = Vec::with_capacity(m);
                for i in 0..d {
                    let j = rng.gen_range(i..d);
                    order.swap(i, j);
                    if !self.is_constant(rows, order[i]) {
                        picked.push(order[i]);
                        if picked.len() == m {
                            break;
                        }
                    }
                }
                picked
            }
            _ => (0..d).filter(|&f| !self.is_constant(rows, f)).collect(),
        };
        picked.sort_unstable();
        picked
    }

    fn best_split(&mut self, rows: &[usize], features: &[usize], counts: &[f64], parent: f64) -> Option<BestSplit> {
        let n = rows.len() as f64;
        let criterion = self.config.criterion;
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        for &feature in features {
            self.scratch.clear();
            self.scratch.extend(rows.iter().map(|&r| (self.x[[r, feature]], self.y[r])));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            left.iter_mut().for_each(|c| *c = 0.0);
            right.copy_from_slice(counts);
            for i in 0..self.scratch.len() - 1 {
                let (v, class) = self.scratch[i];
                left[class] += 1.0;
                right[class] -= 1.0;
                let next = self.scratch[i + 1].0;
                if v == next {
                    continue;
                }
                let n_left = (i + 1) as f64;
                let n_right = n - n_left;
                let child = (n_left * impurity_unchecked(&left, n_left, criterion)
                    + n_right * impurity_unchecked(&right, n_right, criterion))
                    / n;
                let gain = parent - child;
                if best.as_ref().map_or(true, |b| gain > b.gain) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

/// Index of the largest count; ties go to the smaller index.
pub(crate) fn majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}
