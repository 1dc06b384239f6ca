//! One-vs-rest logistic regression.
//!
//! Each binary model minimizes
//! `sum_i log(1 + exp(-y_i (w.x_i + b))) + penalty(w) / C`
//! with `penalty = |w|_1` (solved by FISTA with backtracking) or
//! `penalty = |w|^2 / 2` (solved by L-BFGS). The intercept is not penalized.
//! Internally the objective is divided by N, which leaves the minimizer unchanged.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::spec::{LogRegParams, Regularizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogReg {
    pub weights: Array1<f64>,
    pub intercept: f64,
    /// Unscaled objective at the returned solution.
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// One model per class, or a single model scoring the second class when
    /// there are only two.
    pub models: Vec<BinaryLogReg>,
    pub n_classes: usize,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smooth part of the scaled objective: data loss, plus the L2 term when `l2`.
struct Problem<'x, 'a> {
    x: ArrayView2<'x, f64>,
    y: &'a [f64],
    c: f64,
    l2: bool,
}

impl Problem<'_, '_> {
    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    /// Value and gradient at `theta = [w, b]`.
    fn value_grad(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let d = self.x.ncols();
        let w = theta.slice(ndarray::s![..d]);
        let b = theta[d];
        let z = self.x.dot(&w) + b;
        let mut loss = 0.0;
        let mut coef = Array1::zeros(self.y.len());
        for (i, (&zi, &yi)) in z.iter().zip(self.y).enumerate() {
            loss += log1p_exp(-yi * zi);
            coef[i] = -yi * sigmoid(-yi * zi);
        }
        let n = self.n();
        let mut grad = Array1::zeros(d + 1);
        grad.slice_mut(ndarray::s![..d]).assign(&(self.x.t().dot(&coef) / n));
        grad[d] = coef.sum() / n;
        let mut value = loss / n;
        if self.l2 {
            value += 0.5 * w.dot(&w) / (self.c * n);
            grad.slice_mut(ndarray::s![..d]).scaled_add(1.0 / (self.c * n), &w);
        }
        (value, grad)
    }

    fn l1_penalty(&self, theta: &Array1<f64>) -> f64 {
        let d = self.x.ncols();
        theta.slice(ndarray::s![..d]).iter().map(|v| v.abs()).sum::<f64>() / (self.c * self.n())
    }
}

pub(crate) fn fit_binary(x: ArrayView2<'_, f64>, y: &[f64], params: &LogRegParams) -> BinaryLogReg {
    let problem = Problem {
        x,
        y,
        c: params.c,
        l2: params.regularizer == Regularizer::L2,
    };
    let (theta, value, iterations, converged) = match params.regularizer {
        Regularizer::L2 => lbfgs(&problem, params.max_iter, params.tolerance),
        Regularizer::L1 => fista(&problem, params.max_iter, params.tolerance),
    };
    let d = x.ncols();
    BinaryLogReg {
        weights: theta.slice(ndarray::s![..d]).to_owned(),
        intercept: theta[d],
        loss: value * problem.n(),
        iterations,
        converged,
    }
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const LBFGS_MEMORY: usize = 10;

fn lbfgs(p: &Problem<'_, '_>, max_iter: usize, tol: f64) -> (Array1<f64>, f64, usize, bool) {
    let mut theta = Array1::zeros(p.x.ncols() + 1);
    let (mut f, mut g) = p.value_grad(&theta);
    let mut history: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::new();
    for iter in 0..max_iter {
        if inf_norm(&g) <= tol {
            return (theta, f, iter, true);
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let a = rho * s.dot(&q);
            q.scaled_add(-a, yv);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = history.back() {
            q *= s.dot(yv) / yv.dot(yv);
        }
        for ((s, yv, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * yv.dot(&q);
            q.scaled_add(a - beta, s);
        }
        let mut direction = -q;
        let mut slope = g.dot(&direction);
        if slope >= 0.0 {
            history.clear();
            direction = -g.clone();
            slope = -g.dot(&g);
        }
        // Backtracking Armijo line search.
        let mut step = if history.is_empty() { 1.0 / inf_norm(&g).max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &theta + &(&direction * step);
            let (fc, gc) = p.value_grad(&candidate);
            if fc <= f + 1e-4 * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next, g_next)) = accepted else {
            return (theta, f, iter, inf_norm(&g) <= tol);
        };
        let s = &next - &theta;
        let yv = &g_next - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.dot(&s).sqrt() * yv.dot(&yv).sqrt() {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        let decrease = f - f_next;
        theta = next;
        f = f_next;
        g = g_next;
        if decrease.abs() <= 1e-15 * f.abs().max(1.0) && inf_norm(&g) <= tol.sqrt() {
            return (theta, f, iter + 1, true);
        }
    }
    let done = inf_norm(&g) <= tol;
    (theta, f, max_iter, done)
}

/// Soft-thresholds the weights (not the intercept).
fn prox_l1(v: &Array1<f64>, threshold: f64) -> Array1<f64> {
    let d = v.len() - 1;
    let mut out = v.clone();
    for w in out.iter_mut().take(d) {
        *w = w.signum() * (w.abs() - threshold).max(0.0);
    }
    out
}

fn fista(p: &Problem<'_, '_>, max_iter: usize, tol: f64) -> (Array1<f64>, f64, usize, bool) {
    let lambda = 1.0 / (p.c * p.n());
    let objective = |theta: &Array1<f64>, smooth: f64| smooth + p.l1_penalty(theta);
    let mut x = Array1::zeros(p.x.ncols() + 1);
    let (f0, _) = p.value_grad(&x);
    let mut fx = objective(&x, f0);
    let mut best = (x.clone(), fx);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut lipschitz = 1.0f64;
    for iter in 0..max_iter {
        let (fz, gz) = p.value_grad(&z);
        // Backtrack until the quadratic model majorizes the smooth part.
        let (next, f_next_smooth) = loop {
            let candidate = prox_l1(&(&z - &(&gz / lipschitz)), lambda / lipschitz);
            let diff = &candidate - &z;
            let (fc, _) = p.value_grad(&candidate);
            if fc <= fz + gz.dot(&diff) + 0.5 * lipschitz * diff.dot(&diff) + 1e-15 * fz.abs() {
                break (candidate, fc);
            }
            lipschitz *= 2.0;
        };
        let f_next = objective(&next, f_next_smooth);
        let gradient_mapping = inf_norm(&(&next - &z)) * lipschitz;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if f_next > fx {
            // Restart momentum when the objective goes up.
            z = x.clone();
            t = 1.0;
        } else {
            z = &next + &((&next - &x) * ((t - 1.0) / t_next));
            x = next;
            fx = f_next;
            t = t_next;
            if fx < best.1 {
                best = (x.clone(), fx);
            }
        }
        if gradient_mapping <= tol {
            return (best.0, best.1, iter + 1, true);
        }
        lipschitz *= 0.9;
    }
    (best.0, best.1, max_iter, false)
}

pub(crate) fn fit_ovr(x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, params: &LogRegParams) -> LogRegModel {
    let targets: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
    let models = targets
        .into_iter()
        .map(|k| {
            let labels: Vec<f64> = y.iter().map(|&c| if c == k { 1.0 } else { -1.0 }).collect();
            fit_binary(x, &labels, params)
        })
        .collect();
    LogRegModel { models, n_classes }
}

impl LogRegModel {
    pub fn probabilities(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.outer_iter().enumerate() {
            if self.n_classes == 2 {
                let p = sigmoid(score(&self.models[0], row));
                out[[i, 0]] = 1.0 - p;
                out[[i, 1]] = p;
            } else {
                let raw: Vec<f64> = self.models.iter().map(|m| sigmoid(score(m, row))).collect();
                let total: f64 = raw.iter().sum();
                for (k, r) in raw.into_iter().enumerate() {
                    out[[i, k]] = if total > 0.0 { r / total } else { 1.0 / self.n_classes as f64 };
                }
            }
        }
        out
    }

    pub fn converged(&self) -> bool {
        self.models.iter().all(|m| m.converged)
    }
}

fn score(m: &BinaryLogReg, row: ArrayView1<'_, f64>) -> f64 {
    m.weights.dot(&row) + m.intercept
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params(regularizer: Regularizer, c: f64) -> LogRegParams {
        LogRegParams {
            regularizer,
            c,
            max_iter: 5000,
            tolerance: 1e-9,
        }
    }

    #[test]
    fn stable_helpers() {
        assert!((log1p_exp(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log1p_exp(800.0), 800.0);
        assert!(log1p_exp(-800.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn symmetric_data_has_zero_logit_at_origin() {
        let x = array![[1.0, 0.5], [2.0, -0.3], [-1.0, -0.5], [-2.0, 0.3]];
        let y = [1.0, 1.0, -1.0, -1.0];
        for reg in [Regularizer::L1, Regularizer::L2] {
            let m = fit_binary(x.view(), &y, &params(reg, 1.0));
            assert!(m.intercept.abs() < 1e-6, "{reg:?} intercept {}", m.intercept);
            assert!(m.converged);
        }
    }

    #[test]
    fn l2_solution_is_stationary() {
        let x = array![[0.1, 0.9], [0.8, -0.2], [-0.5, 0.4], [0.3, 0.3], [-0.9, -0.7], [0.2, -0.6]];
        let y = [1.0, 1.0, -1.0, 1.0, -1.0, -1.0];
        let p = params(Regularizer::L2, 2.0);
        let m = fit_binary(x.view(), &y, &p);
        let problem = Problem {
            x: x.view(),
            y: &y,
            c: 2.0,
            l2: true,
        };
        let mut theta = m.weights.to_vec();
        theta.push(m.intercept);
        let (_, g) = problem.value_grad(&Array1::from(theta));
        assert!(inf_norm(&g) < 1e-8);
    }

    #[test]
    fn l1_zeroes_irrelevant_weight() {
        // Feature 1 is pure noise relative to the label; strong L1 removes it.
        let x = array![[1.0, 0.3], [0.8, -0.3], [1.2, 0.1], [-1.0, 0.3], [-0.8, -0.3], [-1.2, -0.1]];
        let y = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let m = fit_binary(x.view(), &y, &params(Regularizer::L1, 0.5));
        assert_eq!(m.weights[1], 0.0);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn loss_never_exceeds_zero_model() {
        let x = array![[0.1, 0.9], [0.8, -0.2], [-0.5, 0.4], [0.3, 0.3], [-0.9, -0.7]];
        let y = [1.0, -1.0, -1.0, 1.0, -1.0];
        for reg in [Regularizer::L1, Regularizer::L2] {
            for c in [0.01, 1.0, 100.0] {
                let m = fit_binary(x.view(), &y, &LogRegParams { max_iter: 3, ..params(reg, c) });
                assert!(m.loss <= 5.0 * 2f64.ln() + 1e-12);
            }
        }
    }
}
