//! Elementwise activations, softmax, and the cross-entropy loss.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| v.maximum(S::ZERO))
}

/// Mask of positions that pass gradient (input > 0).
pub fn relu_mask<S: Scalar>(x: &Tensor<S>) -> Vec<bool> {
    x.data().iter().map(|&v| v > S::ZERO).collect()
}

pub fn relu_backward<S: Scalar>(mask: &[bool], grad_out: &Tensor<S>) -> Tensor<S> {
    debug_assert_eq!(mask.len(), grad_out.len());
    let mut gx = grad_out.clone();
    for (g, &keep) in gx.data_mut().iter_mut().zip(mask) {
        if !keep {
            *g = S::ZERO;
        }
    }
    gx
}

pub fn sigmoid<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| S::ONE / (S::ONE + (-v).exp()))
}

/// Gradient through sigmoid given its output y: g * y * (1 - y).
pub fn sigmoid_backward<S: Scalar>(y: &Tensor<S>, grad_out: &Tensor<S>) -> Tensor<S> {
    debug_assert_eq!(y.shape(), grad_out.shape());
    let mut gx = grad_out.clone();
    for (g, &yv) in gx.data_mut().iter_mut().zip(y.data()) {
        *g *= yv * (S::ONE - yv);
    }
    gx
}

/// Row-wise softmax over the last axis of an (N, K) tensor, computed with
/// max-subtraction for stability.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Tensor<S> {
    let k = *logits.shape().last().expect("softmax needs a class axis");
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let mut max = row[0];
        for &v in row.iter().skip(1) {
            max = max.maximum(v);
        }
        let mut sum = S::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean categorical cross-entropy -ln p[label] over the batch. `probs` rows
/// must already sum to 1 (softmax output).
pub fn cross_entropy<S: Scalar>(probs: &Tensor<S>, labels: &[usize]) -> Result<f64> {
    let k = *probs.shape().last().unwrap_or(&0);
    let n = probs.len() / k.max(1);
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{n} probability rows vs {} labels",
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &label) in probs.data().chunks(k).zip(labels) {
        if label >= k {
            return Err(Error::InvalidLabel { label, classes: k });
        }
        debug_assert!(
            (row.iter().map(|v| v.to_f64()).sum::<f64>() - 1.0).abs() < 1e-6,
            "cross_entropy expects normalized rows"
        );
        let p = row[label].to_f64();
        // f64::max would swallow NaN; a diverged model must surface as a
        // non-finite loss for the divergence guard
        total -= if p.is_finite() { p.max(1e-300).ln() } else { f64::NAN };
    }
    Ok(total / n as f64)
}

/// Combined softmax + cross-entropy gradient w.r.t. the logits:
/// (p - onehot) / batch.
pub fn softmax_xent_backward<S: Scalar>(probs: &Tensor<S>, labels: &[usize]) -> Tensor<S> {
    let k = *probs.shape().last().unwrap();
    let n = labels.len();
    let inv_n = S::from_f64(1.0 / n as f64);
    let mut g = probs.clone();
    for (row, &label) in g.data_mut().chunks_mut(k).zip(labels) {
        row[label] -= S::ONE;
        for v in row.iter_mut() {
            *v *= inv_n;
        }
    }
    g
}
