//! Multinomial logistic regression.
//!
//! Loss: `(1/n) Σᵢ −log softmax(W xᵢ + b)[yᵢ] + (λ/2)‖W‖²_F`, biases unpenalised.
//! Full-batch gradient descent with a halving backtracking line search
//! (Armijo constant 1e−4), so the recorded loss trace never increases.
//!
//! Starting from zero, every iterate keeps `W = B X` for a `C × n` matrix `B`,
//! so the trainer runs on the Gram matrix: logits are `K Bᵀ + b` and
//! `‖W‖² = tr(B K Bᵀ)`. The feature-space gradient is only formed when its
//! ∞-norm is actually needed: cheap bounds decide the stopping test first, and
//! exact checks are spaced so each follows a halving of the gradient 2-norm.
//! Training therefore stops at the first exact or bounded check that meets `tol`,
//! which can be a few iterations after the gradient first does.

use std::fmt;

use super::linalg::{argmax, axpy, dot, gram};
use super::{ClassifierError, LabeledDataset, ModelKind, TrainedModel};

const ARMIJO: f64 = 1e-4;
const MAX_STEP: f64 = 1e8;
const MIN_STEP: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrParams {
    pub l2: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tol: 1e-6,
            max_iters: 1000,
        }
    }
}

impl fmt::Display for LrParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lr l2={} tol={} max_iters={}", self.l2, self.tol, self.max_iters)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub final_loss: f64,
    /// ∞-norm of the full gradient (weights and biases) at the returned parameters.
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Loss at the start and after every accepted step.
    pub loss_trace: Vec<f64>,
}

impl LrModel {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.biases
            .iter()
            .enumerate()
            .map(|(c, b)| dot(&self.weights[c * self.dim..(c + 1) * self.dim], x) + b)
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }

    pub fn predict_index(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}

/// Returns `log Σ exp(z)` and overwrites `z` with the softmax.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
    max + total.ln()
}

/// Loss and gradient at an arbitrary parameter point, evaluated in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxObjective {
    pub loss: f64,
    pub grad_weights: Vec<f64>,
    pub grad_biases: Vec<f64>,
}

pub fn softmax_objective(ds: &LabeledDataset, weights: &[f64], biases: &[f64], l2: f64) -> SoftmaxObjective {
    let (n, d, classes) = (ds.len(), ds.dim(), ds.class_count());
    assert_eq!(weights.len(), classes * d);
    assert_eq!(biases.len(), classes);
    let mut grad_weights: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    let mut grad_biases = vec![0.0; classes];
    let mut data_loss = 0.0;
    let mut z = vec![0.0; classes];
    for i in 0..n {
        let x = ds.row(i);
        for c in 0..classes {
            z[c] = dot(&weights[c * d..(c + 1) * d], x) + biases[c];
        }
        let y = ds.targets()[i];
        let zy = z[y];
        let lse = softmax_in_place(&mut z);
        data_loss += lse - zy;
        for c in 0..classes {
            let r = (z[c] - if c == y { 1.0 } else { 0.0 }) / n as f64;
            grad_biases[c] += r;
            axpy(r, x, &mut grad_weights[c * d..(c + 1) * d]);
        }
    }
    SoftmaxObjective {
        loss: data_loss / n as f64 + 0.5 * l2 * dot(weights, weights),
        grad_weights,
        grad_biases,
    }
}

/// State in span coordinates: `W = B X`, logits `Z = K Bᵀ + b` stored `n × C`.
struct SpanState {
    coef: Vec<f64>,
    biases: Vec<f64>,
    logits: Vec<f64>,
}

struct Evaluation {
    loss: f64,
    /// `(P − Y) / n`, `n × C`.
    residual: Vec<f64>,
}

fn evaluate(state: &SpanState, targets: &[usize], classes: usize, l2: f64) -> Evaluation {
    let n = targets.len();
    let mut residual = state.logits.clone();
    let mut data_loss = 0.0;
    let mut norm2 = 0.0;
    for i in 0..n {
        let row = &mut residual[i * classes..(i + 1) * classes];
        for (c, &zc) in row.iter().enumerate() {
            // ‖W‖² = Σ_c B_c·(K B_cᵀ), and K Bᵀ is the logit matrix minus the biases
            norm2 += state.coef[c * n + i] * (zc - state.biases[c]);
        }
        let zy = row[targets[i]];
        let lse = softmax_in_place(row);
        data_loss += lse - zy;
        row[targets[i]] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    Evaluation {
        loss: data_loss / n as f64 + 0.5 * l2 * norm2,
        residual,
    }
}

pub fn train_lr(ds: &LabeledDataset, params: &LrParams) -> Result<TrainedModel, ClassifierError> {
    if !params.l2.is_finite() || params.l2 < 0.0 || params.tol.is_nan() || params.tol < 0.0 {
        return Err(ClassifierError::InvalidHyperparameter(format!("{params}")));
    }
    let (n, d, classes) = (ds.len(), ds.dim(), ds.class_count());
    let kernel = gram(ds.data(), n, d);
    let targets = ds.targets();
    let l2 = params.l2;
    // ‖g‖∞ ≤ tol is impossible while ‖g‖₂ exceeds tol·√(#params).
    let norm_gate = params.tol * ((classes * (d + 1)) as f64).sqrt();

    let mut state = SpanState {
        coef: vec![0.0; classes * n],
        biases: vec![0.0; classes],
        logits: vec![0.0; n * classes],
    };
    let mut eval = evaluate(&state, targets, classes, l2);
    if !eval.loss.is_finite() {
        return Err(ClassifierError::NonFiniteLoss(0));
    }
    let mut trace = vec![eval.loss];
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    // direction in span coordinates: G = (P − Y)ᵀ/n + λB, and its image K Gᵀ
    let mut dir = vec![0.0; classes * n];
    let mut dir_bias = vec![0.0; classes];
    let mut k_dir = vec![0.0; n * classes];
    let max_column_norm = (0..d)
        .map(|j| (0..n).map(|i| ds.row(i)[j] * ds.row(i)[j]).sum::<f64>())
        .fold(0.0f64, f64::max)
        .sqrt();
    let mut last_exact_check: Option<f64> = None;

    while iterations < params.max_iters {
        for c in 0..classes {
            for i in 0..n {
                dir[c * n + i] = eval.residual[i * classes + c] + l2 * state.coef[c * n + i];
            }
            dir_bias[c] = (0..n).map(|i| eval.residual[i * classes + c]).sum();
        }
        for i in 0..n {
            let k_row = &kernel[i * n..(i + 1) * n];
            for c in 0..classes {
                k_dir[i * classes + c] = dot(k_row, &dir[c * n..(c + 1) * n]);
            }
        }
        let weight_norm2 = (0..classes)
            .map(|c| (0..n).map(|i| dir[c * n + i] * k_dir[i * classes + c]).sum::<f64>())
            .sum::<f64>()
            .max(0.0);
        let grad_norm2 = weight_norm2 + dot(&dir_bias, &dir_bias);
        if grad_norm2.sqrt() <= params.tol {
            break;
        }
        if grad_norm2.sqrt() <= norm_gate {
            // |(G X)_cj| ≤ ‖G_c‖ ‖X_:j‖ settles most checks without forming G X
            let bound = (0..classes)
                .map(|c| dot(&dir[c * n..(c + 1) * n], &dir[c * n..(c + 1) * n]).sqrt())
                .fold(0.0f64, f64::max)
                * max_column_norm;
            let bias_inf = dir_bias.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if bound.max(bias_inf) <= params.tol {
                break;
            }
            // the exact check costs a full C×n×d product, so it waits until the
            // 2-norm has halved since the last one that failed
            if last_exact_check.is_none_or(|g: f64| grad_norm2.sqrt() <= 0.5 * g) {
                if gradient_inf_norm(ds, &dir, &dir_bias) <= params.tol {
                    break;
                }
                last_exact_check = Some(grad_norm2.sqrt());
            }
        }

        step = (step * 2.0).min(MAX_STEP);
        let accepted = loop {
            let trial = SpanState {
                coef: state.coef.iter().zip(&dir).map(|(b, g)| b - step * g).collect(),
                biases: state.biases.iter().zip(&dir_bias).map(|(b, g)| b - step * g).collect(),
                logits: state
                    .logits
                    .iter()
                    .zip(&k_dir)
                    .enumerate()
                    .map(|(j, (z, kg))| z - step * (kg + dir_bias[j % classes]))
                    .collect(),
            };
            let trial_eval = evaluate(&trial, targets, classes, l2);
            // an overflowing trial fails the comparison and the step is halved
            if trial_eval.loss <= eval.loss - ARMIJO * step * grad_norm2 {
                break Some((trial, trial_eval));
            }
            step /= 2.0;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((next, next_eval)) = accepted else {
            break;
        };
        state = next;
        eval = next_eval;
        trace.push(eval.loss);
        iterations += 1;
    }

    let mut weights = vec![0.0; classes * d];
    for c in 0..classes {
        let w = &mut weights[c * d..(c + 1) * d];
        for i in 0..n {
            let b = state.coef[c * n + i];
            if b != 0.0 {
                axpy(b, ds.row(i), w);
            }
        }
    }
    // final gradient from the returned parameters
    for c in 0..classes {
        for i in 0..n {
            dir[c * n + i] = eval.residual[i * classes + c] + l2 * state.coef[c * n + i];
        }
        dir_bias[c] = (0..n).map(|i| eval.residual[i * classes + c]).sum();
    }
    let model = LrModel {
        dim: d,
        weights,
        biases: state.biases,
        final_loss: eval.loss,
        gradient_norm: gradient_inf_norm(ds, &dir, &dir_bias),
        iterations,
        loss_trace: trace,
    };
    Ok(TrainedModel::new(ds, params.to_string(), ModelKind::Lr(model)))
}

/// ∞-norm of `(G X, g_b)`.
fn gradient_inf_norm(ds: &LabeledDataset, dir: &[f64], dir_bias: &[f64]) -> f64 {
    let (n, d) = (ds.len(), ds.dim());
    let mut worst = dir_bias.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut g = vec![0.0; d];
    for c in 0..dir_bias.len() {
        g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let a = dir[c * n + i];
            if a != 0.0 {
                axpy(a, ds.row(i), &mut g);
            }
        }
        worst = g.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    worst
}
