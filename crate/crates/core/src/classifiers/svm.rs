//! Soft-margin kernel SVM trained with SMO and combined one-vs-one.
//!
//! The binary solver minimizes the dual `1/2 a'Qa - e'a` subject to
//! `0 <= a_i <= C` and `y'a = 0`, with `Q_ij = y_i y_j K(x_i, x_j)`. Working
//! pairs are chosen by maximal violation for `i` and second-order gain for `j`;
//! it stops once the violation gap falls below the tolerance.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::{KernelKind, ModelParams, SvmParams};
use super::ModelError;

const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub coef0: f64,
}

impl Kernel {
    fn eval_slices(&self, x: &[f64], z: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(x, z),
            KernelKind::Rbf => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d2).exp()
            }
            KernelKind::Sigmoid => (self.gamma * dot(x, z) + self.coef0).tanh(),
        }
    }
}

fn dot(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| a * b).sum()
}

/// Linear: `<x, z>`; rbf: `exp(-gamma |x - z|^2)`; sigmoid: `tanh(gamma <x, z> + coef0)`.
pub fn kernel_eval(kernel: &Kernel, x: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> Result<f64, ModelError> {
    if x.len() != z.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    let v = kernel.eval_slices(&x.to_vec(), &z.to_vec());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFinite("kernel value".into()))
    }
}

/// 1 / (D * mean per-feature variance); 1.0 if every feature is constant.
pub fn auto_gamma(x: ArrayView2<'_, f64>) -> f64 {
    let d = x.ncols();
    let mean_var = x.var_axis(Axis(0), 0.0).mean().unwrap_or(0.0);
    if d == 0 || mean_var <= 0.0 {
        1.0
    } else {
        1.0 / (d as f64 * mean_var)
    }
}

pub fn resolve_kernel(params: &SvmParams, x: ArrayView2<'_, f64>) -> Kernel {
    let gamma = match params.kernel {
        KernelKind::Linear => params.gamma.unwrap_or(1.0),
        _ => params.gamma.unwrap_or_else(|| auto_gamma(x)),
    };
    Kernel {
        kind: params.kernel,
        gamma,
        coef0: params.coef0,
    }
}

/// Solution of one binary problem; `f(x) = sum coef_k K(x_support_k, x) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    /// Row indices of the support vectors (alpha > 0) in the training matrix.
    pub support: Vec<usize>,
    /// `alpha_i * y_i` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    /// Dual objective `1/2 a'Qa - e'a` at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, kernel: &Kernel, x: ArrayView2<'_, f64>, z: ArrayView1<'_, f64>) -> f64 {
        let z = z.to_vec();
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(&s, &c)| c * kernel.eval_slices(x.row(s).as_slice().expect("standard layout"), &z))
            .sum::<f64>()
            + self.bias
    }
}

/// Trains a binary SVM on labels in {-1, +1}.
pub fn fit_svm_binary(x: ArrayView2<'_, f64>, y: &[f64], params: &SvmParams) -> Result<BinarySvm, ModelError> {
    if x.nrows() != y.len() {
        return Err(ModelError::InvalidInput(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(ModelError::InvalidInput("binary SVM labels must be -1 or +1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(ModelError::TooFewClasses(1));
    }
    ModelParams::Svm(params.clone()).validate()?;
    let x = x.as_standard_layout().into_owned();
    let kernel = resolve_kernel(params, x.view());
    Ok(solve(x.view(), y, &kernel, params))
}

struct KernelRows<'a> {
    x: ArrayView2<'a, f64>,
    kernel: Kernel,
    rows: Vec<Option<Vec<f64>>>,
    loaded: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: ArrayView2<'a, f64>, kernel: Kernel) -> Self {
        let n = x.nrows();
        let capacity = (CACHE_BYTES / (8 * n.max(1))).max(2);
        Self {
            x,
            kernel,
            rows: vec![None; n],
            loaded: VecDeque::new(),
            capacity,
        }
    }

    fn row_slice(&self, i: usize) -> &[f64] {
        self.x.row(i).to_slice().expect("standard layout")
    }

    /// Loads row `i`, never evicting `keep`.
    fn load(&mut self, i: usize, keep: usize) {
        if self.rows[i].is_some() {
            return;
        }
        if self.loaded.len() >= self.capacity {
            let mut victim = self.loaded.pop_front().expect("cache non-empty");
            if victim == keep {
                self.loaded.push_back(victim);
                victim = self.loaded.pop_front().expect("capacity at least 2");
            }
            self.rows[victim] = None;
        }
        let xi = self.row_slice(i);
        let row: Vec<f64> = (0..self.x.nrows())
            .map(|j| self.kernel.eval_slices(xi, self.row_slice(j)))
            .collect();
        self.rows[i] = Some(row);
        self.loaded.push_back(i);
    }

    fn get(&self, i: usize) -> &[f64] {
        self.rows[i].as_deref().expect("row loaded")
    }
}

fn solve(x: ArrayView2<'_, f64>, y_in: &[f64], kernel: &Kernel, params: &SvmParams) -> BinarySvm {
    let n = y_in.len();
    // Solve with the first label mapped to +1 so that flipping every label
    // replays the exact same arithmetic.
    let orientation = y_in[0];
    let y: Vec<f64> = y_in.iter().map(|v| v * orientation).collect();
    let c = params.c;
    let eps = params.tolerance;
    let max_iter = params.max_passes.saturating_mul(n.max(1));

    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let r = x.row(i);
            let s = r.as_slice().expect("standard layout");
            kernel.eval_slices(s, s)
        })
        .collect();
    let mut cache = KernelRows::new(x, *kernel);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        // Maximal violating i.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        if let Some(i) = i_sel {
            cache.load(i, i);
            let ki = cache.get(i);
            let mut best = f64::INFINITY;
            for t in 0..n {
                let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
                if !low {
                    continue;
                }
                let v = y[t] * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let mut quad = diag[i] + diag[t] - 2.0 * ki[t];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= best {
                        best = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            converged = true;
            break;
        };
        if gmax + gmax2 < eps {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        cache.load(i, i);
        cache.load(j, i);
        let (ki, kj) = (cache.get(i), cache.get(j));
        let qij = y[i] * y[j] * ki[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    // Bias from free vectors, else the midpoint of the feasible interval.
    let (mut ub, mut lb, mut free_sum, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { (ub + lb) / 2.0 };
    let objective = alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>() / 2.0;

    let support: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let coef = support.iter().map(|&t| alpha[t] * y_in[t]).collect();
    BinarySvm {
        support,
        coef,
        bias: -rho * orientation,
        alpha,
        objective,
        iterations,
        converged,
    }
}

/// One binary machine per unordered class pair; class `a` is the positive side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    pub class_a: usize,
    pub class_b: usize,
    /// Indices into [`SvmModel::support_vectors`].
    pub support: Vec<usize>,
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Primal weights, kept for the linear kernel.
    pub weights: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub n_classes: usize,
    /// Union of all pairs' support vectors, in training row order.
    pub support_vectors: Array2<f64>,
    pub pairs: Vec<PairMachine>,
}

pub(crate) fn fit_ovo(x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, params: &SvmParams) -> SvmModel {
    let x = x.as_standard_layout();
    let kernel = resolve_kernel(params, x.view());
    let pairs: Vec<(usize, usize)> = (0..n_classes)
        .flat_map(|a| (a + 1..n_classes).map(move |b| (a, b)))
        .collect();
    let solved: Vec<(Vec<usize>, BinarySvm)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let rows: Vec<usize> = (0..y.len()).filter(|&r| y[r] == a || y[r] == b).collect();
            let sub = x.select(Axis(0), &rows);
            let labels: Vec<f64> = rows.iter().map(|&r| if y[r] == a { 1.0 } else { -1.0 }).collect();
            let machine = solve(sub.view(), &labels, &kernel, params);
            (rows, machine)
        })
        .collect();

    let mut in_union = vec![false; y.len()];
    for (rows, m) in &solved {
        for &s in &m.support {
            in_union[rows[s]] = true;
        }
    }
    let union_rows: Vec<usize> = (0..y.len()).filter(|&r| in_union[r]).collect();
    let mut position = vec![usize::MAX; y.len()];
    for (p, &r) in union_rows.iter().enumerate() {
        position[r] = p;
    }
    let machines = pairs
        .iter()
        .zip(solved)
        .map(|(&(a, b), (rows, m))| {
            let weights = (kernel.kind == KernelKind::Linear).then(|| {
                let mut w = vec![0.0; x.ncols()];
                for (&s, &c) in m.support.iter().zip(&m.coef) {
                    for (wk, xk) in w.iter_mut().zip(x.row(rows[s])) {
                        *wk += c * xk;
                    }
                }
                w
            });
            PairMachine {
                class_a: a,
                class_b: b,
                support: m.support.iter().map(|&s| position[rows[s]]).collect(),
                coef: m.coef,
                bias: m.bias,
                weights,
                iterations: m.iterations,
                converged: m.converged,
            }
        })
        .collect();
    SvmModel {
        kernel,
        n_classes,
        support_vectors: x.select(Axis(0), &union_rows),
        pairs: machines,
    }
}

impl SvmModel {
    /// Pairwise decision values, in pair order, for one sample.
    pub fn decisions(&self, z: ArrayView1<'_, f64>) -> Vec<f64> {
        let z = z.to_vec();
        let kvals: Option<Vec<f64>> = (self.kernel.kind != KernelKind::Linear).then(|| {
            self.support_vectors
                .outer_iter()
                .map(|sv| self.kernel.eval_slices(sv.as_slice().expect("standard layout"), &z))
                .collect()
        });
        self.pairs
            .iter()
            .map(|p| match (&p.weights, &kvals) {
                (Some(w), _) => dot(w, &z) + p.bias,
                (None, Some(k)) => p.support.iter().zip(&p.coef).map(|(&s, &c)| c * k[s]).sum::<f64>() + p.bias,
                (None, None) => unreachable!("non-linear kernels always have kernel values"),
            })
            .collect()
    }

    /// Votes per class and the summed |f| of the pairs each class won.
    pub fn votes(&self, z: ArrayView1<'_, f64>) -> (Vec<usize>, Vec<f64>) {
        let mut votes = vec![0; self.n_classes];
        let mut strength = vec![0.0; self.n_classes];
        for (p, f) in self.pairs.iter().zip(self.decisions(z)) {
            let winner = if f > 0.0 { p.class_a } else { p.class_b };
            votes[winner] += 1;
            strength[winner] += f.abs();
        }
        (votes, strength)
    }

    pub fn predict_row(&self, z: ArrayView1<'_, f64>) -> usize {
        let (votes, strength) = self.votes(z);
        let mut best = 0;
        for c in 1..self.n_classes {
            if votes[c] > votes[best] || (votes[c] == votes[best] && strength[c] > strength[best]) {
                best = c;
            }
        }
        best
    }

    pub fn converged(&self) -> bool {
        self.pairs.iter().all(|p| p.converged)
    }
}
