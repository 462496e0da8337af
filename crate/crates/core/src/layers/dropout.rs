//! Inverted dropout: survivors are rescaled by 1/(1-rate) at train time so
//! inference is the identity.

use crate::error::{Error, Result};
use crate::layers::norm::Mode;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DropoutCtx {
    /// None when the pass was an identity (infer mode or rate 0).
    mask: Option<Vec<bool>>,
    scale: f64,
}

pub fn dropout_forward<S: Scalar>(
    x: &Tensor<S>,
    rate: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor<S>, DropoutCtx)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((
            x.clone(),
            DropoutCtx {
                mask: None,
                scale: 1.0,
            },
        ));
    }
    let scale = 1.0 / (1.0 - rate);
    let s_scale = S::from_f64(scale);
    let mask: Vec<bool> = (0..x.len()).map(|_| rng.next_f64() >= rate).collect();
    let mut out = x.clone();
    for (v, &keep) in out.data_mut().iter_mut().zip(&mask) {
        *v = if keep { *v * s_scale } else { S::ZERO };
    }
    Ok((
        out,
        DropoutCtx {
            mask: Some(mask),
            scale,
        },
    ))
}

pub fn dropout_backward<S: Scalar>(ctx: &DropoutCtx, grad_out: &Tensor<S>) -> Tensor<S> {
    match &ctx.mask {
        None => grad_out.clone(),
        Some(mask) => {
            let s_scale = S::from_f64(ctx.scale);
            let mut gx = grad_out.clone();
            for (g, &keep) in gx.data_mut().iter_mut().zip(mask) {
                *g = if keep { *g * s_scale } else { S::ZERO };
            }
            gx
        }
    }
}
