//! Feed-forward network: logistic-sigmoid hidden layers, softmax output,
//! cross-entropy loss with an L2 weight penalty, trained by mini-batch Adam.
//!
//! For a batch of n rows the loss is
//! `mean cross-entropy + alpha / (2n) * sum of squared weights` (biases excluded).

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::MlpParams;
use crate::rng::{derive_seed, rng_from_seed};

const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
    pub epochs: usize,
    /// The loss plateaued before `max_epochs`.
    pub converged: bool,
}

fn sigmoid_in_place(a: &mut Array2<f64>) {
    a.mapv_inplace(|z| {
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    });
}

fn softmax_in_place(a: &mut Array2<f64>) {
    for mut row in a.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
}

impl Mlp {
    /// Layer widths `[D, hidden..., K]` with every parameter zero.
    pub fn zeros(widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn glorot(widths: &[usize], seed: u64) -> Self {
        let mut rng = rng_from_seed(derive_seed(seed, "mlp-init", 0));
        let mut net = Self::zeros(widths);
        for layer in &mut net.layers {
            let (fan_in, fan_out) = layer.weights.dim();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.gen_range(-bound..=bound));
        }
        net
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Activations of every layer, input first.
    fn forward(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights) + &layer.bias;
            if i + 1 == self.layers.len() {
                softmax_in_place(&mut z);
            } else {
                sigmoid_in_place(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    pub fn probabilities(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(x).pop().expect("at least one layer")
    }

    /// Loss on a batch and its gradient, laid out like `self`.
    pub fn loss_and_grad(&self, x: ArrayView2<'_, f64>, y: &[usize], alpha: f64) -> (f64, Mlp) {
        let n = y.len() as f64;
        let acts = self.forward(x);
        let out = acts.last().expect("output layer");
        let mut loss = 0.0;
        for (i, &c) in y.iter().enumerate() {
            loss -= out[[i, c]].max(f64::MIN_POSITIVE).ln();
        }
        loss /= n;
        let squares: f64 = self.layers.iter().map(|l| l.weights.iter().map(|w| w * w).sum::<f64>()).sum();
        loss += alpha / (2.0 * n) * squares;

        // Softmax with cross-entropy: d loss / d z = (p - onehot) / n.
        let mut delta = out.clone();
        for (i, &c) in y.iter().enumerate() {
            delta[[i, c]] -= 1.0;
        }
        delta /= n;
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[li];
            let mut gw = input.t().dot(&delta);
            gw.scaled_add(alpha / n, &layer.weights);
            let gb = delta.sum_axis(Axis(0));
            if li > 0 {
                let mut back = delta.dot(&layer.weights.t());
                Zip::from(&mut back).and(input).for_each(|d, &a| *d *= a * (1.0 - a));
                delta = back;
            }
            grads.push(Layer { weights: gw, bias: gb });
        }
        grads.reverse();
        (loss, Mlp { layers: grads })
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

pub(crate) fn fit_mlp(x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, params: &MlpParams, seed: u64) -> (Mlp, TrainingLog) {
    let n = y.len();
    let mut widths = vec![x.ncols()];
    widths.extend(&params.hidden_sizes);
    widths.push(n_classes);
    let mut net = Mlp::glorot(&widths, seed);
    let batch = params.batch_size.unwrap_or(200).min(n).max(1);
    let mut m = vec![0.0; net.n_params()];
    let mut v = vec![0.0; net.n_params()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng_from_seed(derive_seed(seed, "mlp-shuffle", 0));
    let mut log = TrainingLog {
        epoch_losses: Vec::new(),
        epochs: 0,
        converged: false,
    };
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;

    for _ in 0..params.max_epochs {
        if params.shuffle_each_epoch {
            order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&r| y[r]).collect();
            let (loss, grad) = net.loss_and_grad(xb.view(), &yb, params.alpha);
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
            let lr = params.learning_rate * (1.0 - params.beta2.powi(step)).sqrt() / (1.0 - params.beta1.powi(step));
            for (((p, g), mk), vk) in net.params_mut().zip(grad.params()).zip(&mut m).zip(&mut v) {
                *mk = params.beta1 * *mk + (1.0 - params.beta1) * g;
                *vk = params.beta2 * *vk + (1.0 - params.beta2) * g * g;
                *p -= lr * *mk / (vk.sqrt() + ADAM_EPS);
            }
        }
        epoch_loss /= n as f64;
        log.epoch_losses.push(epoch_loss);
        log.epochs += 1;
        if let Some(tol) = params.tol {
            if epoch_loss > best_loss - tol {
                stale += 1;
            } else {
                stale = 0;
            }
            best_loss = best_loss.min(epoch_loss);
            if stale >= params.n_iter_no_change {
                log.converged = true;
                break;
            }
        }
    }
    if params.tol.is_none() {
        log.converged = true;
    }
    (net, log)
}
