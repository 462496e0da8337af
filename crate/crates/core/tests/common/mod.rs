//! Shared finite-difference machinery. The numeric gradient here is the
//! independent oracle: central differences over a scalar projection loss,
//! never touching the analytic backward path it checks.
#![allow(dead_code)] // each test binary uses its own subset

use clap_core::rng::Rng;
use clap_core::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, b: f64) -> f64 {
    // a gradient that is zero by construction (e.g. a bias absorbed by the
    // following normalization) leaves only difference-quotient noise on the
    // numeric side; both-tiny counts as agreement
    if a.abs().max(b.abs()) < 1e-7 {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central-difference gradient of `loss` w.r.t. every entry of `values`.
pub fn numeric_gradient(values: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0; values.len()];
    let mut work = values.to_vec();
    for i in 0..values.len() {
        let keep = work[i];
        work[i] = keep + FD_STEP;
        let plus = loss(&work);
        work[i] = keep - FD_STEP;
        let minus = loss(&work);
        work[i] = keep;
        grad[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    grad
}

/// Largest relative error between an analytic gradient and the numeric one.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Random tensor at roughly 1e-1 scale, away from ReLU kinks.
pub fn small_random(shape: Vec<usize>, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        sign * rng.uniform(0.02, 0.25)
    })
}

/// Fixed random projection turning a tensor-valued op into a scalar loss:
/// loss = sum(out * proj). The backward seed gradient is then `proj`.
pub fn projection(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.uniform(-1.0, 1.0))
}

pub fn dot(out: &Tensor<f64>, proj: &Tensor<f64>) -> f64 {
    assert_eq!(out.shape(), proj.shape(), "projection shape drifted");
    out.data()
        .iter()
        .zip(proj.data())
        .map(|(a, b)| a * b)
        .sum()
}
