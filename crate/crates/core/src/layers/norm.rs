//! Batch normalization over the channel axis of (N, C, H, W) tensors.

use crate::error::{Error, Result};
use crate::parallel::{for_each_chunk, Exec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
}

/// Batch statistics produced by a train-mode forward; the trainer folds them
/// into the running estimates once the step is accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct BnUpdate<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct BnCtx<S> {
    mode: Mode,
    channels: usize,
    /// Normalized input (train mode only).
    x_hat: Option<Tensor<S>>,
    inv_std: Vec<S>,
    pub update: Option<BnUpdate<S>>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::ones(vec![channels]),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::ones(vec![channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor<S>, mode: Mode, exec: Exec) -> Result<(Tensor<S>, BnCtx<S>)> {
        let c = self.channels();
        if x.rank() != 4 || x.shape()[1] != c {
            return Err(Error::ShapeMismatch(format!(
                "batch_norm over {c} channels got input {:?}",
                x.shape()
            )));
        }
        let (n, _, h, w) = (x.shape()[0], c, x.shape()[2], x.shape()[3]);
        let hw = h * w;
        let m = (n * hw) as f64;
        match mode {
            Mode::Train => {
                let mut mean = vec![S::ZERO; c];
                let mut var = vec![S::ZERO; c];
                let mut inv_std = vec![S::ZERO; c];
                let xs = x.data();
                // one task per channel; sums run in fixed (n, h, w) order
                let mut stats = vec![(S::ZERO, S::ZERO); c];
                for_each_chunk(exec, &mut stats, 1, |ci, slot| {
                    let mut sum = S::ZERO;
                    for ni in 0..n {
                        for &v in &xs[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                            sum += v;
                        }
                    }
                    let mu = sum / S::from_f64(m);
                    let mut sq = S::ZERO;
                    for ni in 0..n {
                        for &v in &xs[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                            let d = v - mu;
                            sq += d * d;
                        }
                    }
                    slot[0] = (mu, sq / S::from_f64(m));
                });
                for (ci, &(mu, v)) in stats.iter().enumerate() {
                    mean[ci] = mu;
                    var[ci] = v;
                    inv_std[ci] = S::ONE / (v + S::from_f64(BN_EPS)).sqrt();
                }
                let mut x_hat = x.clone();
                for_each_chunk(exec, x_hat.data_mut(), hw, |plane_ix, plane| {
                    let ci = plane_ix % c;
                    let (mu, istd) = (mean[ci], inv_std[ci]);
                    for v in plane.iter_mut() {
                        *v = (*v - mu) * istd;
                    }
                });
                let mut y = x_hat.clone();
                for_each_chunk(exec, y.data_mut(), hw, |plane_ix, plane| {
                    let ci = plane_ix % c;
                    let (g, b) = (self.gamma.data()[ci], self.beta.data()[ci]);
                    for v in plane.iter_mut() {
                        *v = *v * g + b;
                    }
                });
                Ok((
                    y,
                    BnCtx {
                        mode,
                        channels: c,
                        x_hat: Some(x_hat),
                        inv_std,
                        update: Some(BnUpdate { mean, var }),
                    },
                ))
            }
            Mode::Infer => {
                let inv_std: Vec<S> = self
                    .running_var
                    .data()
                    .iter()
                    .map(|&v| S::ONE / (v + S::from_f64(BN_EPS)).sqrt())
                    .collect();
                let mut y = x.clone();
                for_each_chunk(exec, y.data_mut(), hw, |plane_ix, plane| {
                    let ci = plane_ix % c;
                    let mu = self.running_mean.data()[ci];
                    let (g, b) = (self.gamma.data()[ci], self.beta.data()[ci]);
                    let istd = inv_std[ci];
                    for v in plane.iter_mut() {
                        *v = (*v - mu) * istd * g + b;
                    }
                });
                Ok((
                    y,
                    BnCtx {
                        mode,
                        channels: c,
                        x_hat: None,
                        inv_std,
                        update: None,
                    },
                ))
            }
        }
    }

    /// Returns (grad_input, grad_gamma, grad_beta). Train mode differentiates
    /// through the batch statistics.
    pub fn backward(
        &self,
        ctx: &BnCtx<S>,
        grad_out: &Tensor<S>,
        exec: Exec,
    ) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
        let c = ctx.channels;
        if grad_out.rank() != 4 || grad_out.shape()[1] != c {
            return Err(Error::ContextMismatch(format!(
                "batch_norm backward got grad {:?} for {c} channels",
                grad_out.shape()
            )));
        }
        let (n, _, h, w) = (
            grad_out.shape()[0],
            c,
            grad_out.shape()[2],
            grad_out.shape()[3],
        );
        let hw = h * w;
        let m = S::from_f64((n * hw) as f64);
        let gs = grad_out.data();
        match ctx.mode {
            Mode::Train => {
                let x_hat = ctx
                    .x_hat
                    .as_ref()
                    .ok_or_else(|| Error::ContextMismatch("train ctx lacks x_hat".into()))?;
                if x_hat.shape() != grad_out.shape() {
                    return Err(Error::ContextMismatch(format!(
                        "batch_norm backward shape {:?} vs forward {:?}",
                        grad_out.shape(),
                        x_hat.shape()
                    )));
                }
                let xh = x_hat.data();
                // per-channel reductions: sum g, sum g*x_hat
                let mut sums = vec![(S::ZERO, S::ZERO); c];
                for_each_chunk(exec, &mut sums, 1, |ci, slot| {
                    let mut sg = S::ZERO;
                    let mut sgx = S::ZERO;
                    for ni in 0..n {
                        let base = (ni * c + ci) * hw;
                        for t in 0..hw {
                            let g = gs[base + t];
                            sg += g;
                            sgx += g * xh[base + t];
                        }
                    }
                    slot[0] = (sg, sgx);
                });
                let mut ggamma = Tensor::zeros(vec![c]);
                let mut gbeta = Tensor::zeros(vec![c]);
                for ci in 0..c {
                    gbeta.data_mut()[ci] = sums[ci].0;
                    ggamma.data_mut()[ci] = sums[ci].1;
                }
                let mut gx = Tensor::zeros(grad_out.shape().to_vec());
                for_each_chunk(exec, gx.data_mut(), hw, |plane_ix, plane| {
                    let ni = plane_ix / c;
                    let ci = plane_ix % c;
                    let gamma = self.gamma.data()[ci];
                    let istd = ctx.inv_std[ci];
                    let (sg, sgx) = sums[ci];
                    let mean_g = sg / m;
                    let mean_gx = sgx / m;
                    let base = (ni * c + ci) * hw;
                    for (t, v) in plane.iter_mut().enumerate() {
                        let g = gs[base + t];
                        let xv = xh[base + t];
                        *v = gamma * istd * (g - mean_g - xv * mean_gx);
                    }
                });
                Ok((gx, ggamma, gbeta))
            }
            Mode::Infer => {
                let mut ggamma = Tensor::zeros(vec![c]);
                let mut gbeta = Tensor::zeros(vec![c]);
                // x_hat in infer mode would require the cached input; the
                // infer path only ever backpropagates activations (Grad-CAM),
                // so parameter gradients stay zero by contract.
                let mut gx = Tensor::zeros(grad_out.shape().to_vec());
                for_each_chunk(exec, gx.data_mut(), hw, |plane_ix, plane| {
                    let ci = plane_ix % c;
                    let factor = self.gamma.data()[ci] * ctx.inv_std[ci];
                    let base = plane_ix * hw;
                    for (t, v) in plane.iter_mut().enumerate() {
                        *v = gs[base + t] * factor;
                    }
                });
                let _ = (&mut ggamma, &mut gbeta);
                Ok((gx, ggamma, gbeta))
            }
        }
    }

    /// Folds batch statistics into the running estimates:
    /// r <- momentum * r + (1 - momentum) * batch.
    pub fn apply_update(&mut self, update: &BnUpdate<S>) {
        let m = S::from_f64(BN_MOMENTUM);
        let one_minus = S::ONE - m;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&update.mean) {
            *r = *r * m + b * one_minus;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&update.var) {
            *r = *r * m + b * one_minus;
        }
    }
}
