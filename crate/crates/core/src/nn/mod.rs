//! Small dense networks with hand-written backpropagation.
//!
//! Parameters of every network live in one flat `Vec<f64>`; layers are views
//! into it. Gradients use the same layout, so optimizers and the
//! finite-difference checker work on plain slices.

mod gradcheck;
mod lstm;
mod mlp;

pub use gradcheck::{grad_check, sample_indices};
pub use lstm::{sequence_cross_entropy, GradFault, LstmNet, LstmShape, LstmState, LstmTrace};
pub use mlp::{Mlp, MlpTrace};

use ndarray::{Array2, ArrayView2};
use rand::Rng;

/// Named slice of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let total = row.sum();
        row.mapv_inplace(|p| p / total);
    }
    out
}

/// Softmax of a single vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean cross-entropy of row-wise distributions against target distributions.
pub fn cross_entropy(probs: ArrayView2<f64>, targets: ArrayView2<f64>) -> f64 {
    let n = probs.nrows().max(1) as f64;
    let mut total = 0.0;
    for (p, t) in probs.iter().zip(targets.iter()) {
        if *t > 0.0 {
            total -= t * p.max(1e-300).ln();
        }
    }
    total / n
}

/// Rescales `grads` in place so its L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Plain gradient descent step.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

pub(crate) fn uniform_init<R: Rng + ?Sized>(buf: &mut [f64], scale: f64, rng: &mut R) {
    for p in buf.iter_mut() {
        *p = rng.random_range(-scale..=scale);
    }
}
