//! Affine map (N, D) x (D, K) + (K,) -> (N, K).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn linear_forward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (n, d) = dims2(x)?;
    let (wd, k) = dims2(weight)?;
    if wd != d || bias.shape() != [k] {
        return Err(Error::ShapeMismatch(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(vec![n, k]);
    let od = out.data_mut();
    for ni in 0..n {
        let row = &mut od[ni * k..(ni + 1) * k];
        row.copy_from_slice(bias.data());
        let xrow = &x.data()[ni * d..(ni + 1) * d];
        for (di, &xv) in xrow.iter().enumerate() {
            let wrow = &weight.data()[di * k..(di + 1) * k];
            for (acc, &wv) in row.iter_mut().zip(wrow) {
                *acc += xv * wv;
            }
        }
    }
    Ok(out)
}

/// Returns (grad_input, grad_weight, grad_bias).
pub fn linear_backward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (n, d) = dims2(x)?;
    let (_, k) = dims2(weight)?;
    if grad_out.shape() != [n, k] {
        return Err(Error::ContextMismatch(format!(
            "linear backward grad {:?}, expected {:?}",
            grad_out.shape(),
            [n, k]
        )));
    }
    let mut gx = Tensor::zeros(vec![n, d]);
    let mut gw = Tensor::zeros(vec![d, k]);
    let mut gb = Tensor::zeros(vec![k]);
    for ni in 0..n {
        let grow = &grad_out.data()[ni * k..(ni + 1) * k];
        let xrow = &x.data()[ni * d..(ni + 1) * d];
        for di in 0..d {
            let wrow = &weight.data()[di * k..(di + 1) * k];
            let mut acc = S::ZERO;
            for (&wv, &gv) in wrow.iter().zip(grow) {
                acc += wv * gv;
            }
            gx.data_mut()[ni * d + di] = acc;
            let gwrow = &mut gw.data_mut()[di * k..(di + 1) * k];
            let xv = xrow[di];
            for (slot, &gv) in gwrow.iter_mut().zip(grow) {
                *slot += xv * gv;
            }
        }
        for (slot, &gv) in gb.data_mut().iter_mut().zip(grow) {
            *slot += gv;
        }
    }
    Ok((gx, gw, gb))
}

fn dims2<S: Scalar>(t: &Tensor<S>) -> Result<(usize, usize)> {
    let s = t.shape();
    if s.len() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a rank-2 tensor, got {s:?}")));
    }
    Ok((s[0], s[1]))
}
