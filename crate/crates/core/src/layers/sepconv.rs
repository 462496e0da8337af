//! Separable convolution block: depthwise k x k -> pointwise 1x1 (+ bias),
//! then activation and batch normalization. The default order applies ReLU
//! before BatchNorm; `BnOrder::Conventional` swaps them for ablation.

use crate::error::Result;
use crate::layers::act::{relu, relu_backward, relu_mask};
use crate::layers::conv::{
    depthwise_backward, depthwise_forward, pointwise_backward, pointwise_forward, Padding,
};
use crate::layers::norm::{BatchNorm, BnCtx, Mode};
use crate::parallel::Exec;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnOrder {
    /// ReLU first, BatchNorm second.
    Literal,
    /// BatchNorm first, ReLU second.
    Conventional,
}

impl BnOrder {
    pub fn name(self) -> &'static str {
        match self {
            BnOrder::Literal => "literal",
            BnOrder::Conventional => "conventional",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "literal" => Some(BnOrder::Literal),
            "conventional" => Some(BnOrder::Conventional),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SepConvBlock<S> {
    pub name: String,
    pub kernel_size: usize,
    /// Depthwise kernel (C_in, k, k).
    pub dw: Tensor<S>,
    /// Pointwise kernel (C_in, C_out).
    pub pw: Tensor<S>,
    /// Pointwise bias (C_out). The depthwise stage carries no bias.
    pub bias: Tensor<S>,
    pub bn: BatchNorm<S>,
    pub order: BnOrder,
}

pub struct SepConvCtx<S> {
    pub input: Tensor<S>,
    dw_out: Tensor<S>,
    relu_mask: Vec<bool>,
    bn_ctx: BnCtx<S>,
}

impl<S: Scalar> SepConvCtx<S> {
    /// Batch statistics captured by a train-mode forward, if any.
    pub fn bn_update(&self) -> Option<&crate::layers::norm::BnUpdate<S>> {
        self.bn_ctx.update.as_ref()
    }
}

/// Gradients in parameter order (dw, pw, bias, gamma, beta).
pub struct SepConvGrads<S> {
    pub dw: Tensor<S>,
    pub pw: Tensor<S>,
    pub bias: Tensor<S>,
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
}

impl<S: Scalar> SepConvBlock<S> {
    pub fn new(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kernel_size: usize,
        order: BnOrder,
        rng: &mut Rng,
    ) -> Self {
        let k = kernel_size;
        SepConvBlock {
            name: name.into(),
            kernel_size: k,
            dw: Tensor::he_uniform(vec![c_in, k, k], k * k, rng),
            pw: Tensor::he_uniform(vec![c_in, c_out], c_in, rng),
            bias: Tensor::zeros(vec![c_out]),
            bn: BatchNorm::new(c_out),
            order,
        }
    }

    pub fn c_in(&self) -> usize {
        self.dw.shape()[0]
    }

    pub fn c_out(&self) -> usize {
        self.pw.shape()[1]
    }

    pub fn forward(
        &self,
        x: &Tensor<S>,
        mode: Mode,
        exec: Exec,
    ) -> Result<(Tensor<S>, SepConvCtx<S>)> {
        let dw_out = depthwise_forward(x, &self.dw, 1, Padding::Same, exec)?;
        let pw_out = pointwise_forward(&dw_out, &self.pw, &self.bias, exec)?;
        let (y, mask, bn_ctx) = match self.order {
            BnOrder::Literal => {
                let mask = relu_mask(&pw_out);
                let activated = relu(&pw_out);
                let (y, bn_ctx) = self.bn.forward(&activated, mode, exec)?;
                (y, mask, bn_ctx)
            }
            BnOrder::Conventional => {
                let (normed, bn_ctx) = self.bn.forward(&pw_out, mode, exec)?;
                let mask = relu_mask(&normed);
                (relu(&normed), mask, bn_ctx)
            }
        };
        y.debug_check_finite(&self.name);
        Ok((
            y,
            SepConvCtx {
                input: x.clone(),
                dw_out,
                relu_mask: mask,
                bn_ctx,
            },
        ))
    }

    pub fn backward(
        &self,
        ctx: &SepConvCtx<S>,
        grad_out: &Tensor<S>,
        exec: Exec,
    ) -> Result<(Tensor<S>, SepConvGrads<S>)> {
        let (g_pw_out, gamma, beta) = match self.order {
            BnOrder::Literal => {
                let (g_act, gamma, beta) = self.bn.backward(&ctx.bn_ctx, grad_out, exec)?;
                (relu_backward(&ctx.relu_mask, &g_act), gamma, beta)
            }
            BnOrder::Conventional => {
                let g_norm = relu_backward(&ctx.relu_mask, grad_out);
                let (g, gamma, beta) = self.bn.backward(&ctx.bn_ctx, &g_norm, exec)?;
                (g, gamma, beta)
            }
        };
        let (g_dw_out, pw, bias) = pointwise_backward(&ctx.dw_out, &self.pw, &g_pw_out, exec)?;
        let (gx, dw) =
            depthwise_backward(&ctx.input, &self.dw, &g_dw_out, 1, Padding::Same, exec)?;
        Ok((
            gx,
            SepConvGrads {
                dw,
                pw,
                bias,
                gamma,
                beta,
            },
        ))
    }

    /// Trainable parameter count: k^2*C_in + C_in*C_out + C_out + 2*C_out.
    pub fn trainable_params(&self) -> usize {
        self.dw.len() + self.pw.len() + self.bias.len() + self.bn.gamma.len() + self.bn.beta.len()
    }

    /// Non-trainable parameter count (BN running statistics): 2*C_out.
    pub fn stat_params(&self) -> usize {
        self.bn.running_mean.len() + self.bn.running_var.len()
    }

    /// Multiply-adds per forward pass at the given input spatial size
    /// (stride 1, same padding: output spatial size equals input's).
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let hw = (h * w) as u64;
        let k = self.kernel_size as u64;
        let (ci, co) = (self.c_in() as u64, self.c_out() as u64);
        k * k * ci * hw + ci * co * hw
    }
}
