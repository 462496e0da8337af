//! Average pooling (with ceil semantics at odd edges) and global average
//! pooling.

use crate::error::{Error, Result};
use crate::layers::conv::shape4;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Pooled extent along one axis. Ceil mode rounds odd extents up (7 -> 4 for
/// k = s = 2); the trailing window averages over valid cells only.
pub fn pool_out_extent(extent: usize, k: usize, stride: usize, ceil_mode: bool) -> usize {
    if extent < k {
        return if ceil_mode && extent >= 1 { 1 } else { 0 };
    }
    if ceil_mode {
        (extent - k).div_ceil(stride) + 1
    } else {
        (extent - k) / stride + 1
    }
}

#[derive(Debug, Clone)]
pub struct PoolCtx {
    in_shape: Vec<usize>,
    k: usize,
    stride: usize,
    ceil_mode: bool,
}

pub fn average_pool2d<S: Scalar>(
    x: &Tensor<S>,
    k: usize,
    stride: usize,
    ceil_mode: bool,
) -> Result<(Tensor<S>, PoolCtx)> {
    let (n, c, h, w) = shape4(x)?;
    if h < 1 || w < 1 {
        return Err(Error::DegenerateInput(format!(
            "average_pool2d on {h}x{w} input"
        )));
    }
    let oh = pool_out_extent(h, k, stride, ceil_mode);
    let ow = pool_out_extent(w, k, stride, ceil_mode);
    if oh == 0 || ow == 0 {
        return Err(Error::DegenerateInput(format!(
            "average_pool2d window {k} does not fit {h}x{w}"
        )));
    }
    let mut out = Tensor::zeros(vec![n, c, oh, ow]);
    let xs = x.data();
    let od = out.data_mut();
    for plane_ix in 0..n * c {
        let xin = &xs[plane_ix * h * w..(plane_ix + 1) * h * w];
        let oplane = &mut od[plane_ix * oh * ow..(plane_ix + 1) * oh * ow];
        for oy in 0..oh {
            let y0 = oy * stride;
            let y1 = (y0 + k).min(h);
            for ox in 0..ow {
                let x0 = ox * stride;
                let x1 = (x0 + k).min(w);
                let mut acc = S::ZERO;
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        acc += xin[yy * w + xx];
                    }
                }
                let count = ((y1 - y0) * (x1 - x0)) as f64;
                oplane[oy * ow + ox] = acc / S::from_f64(count);
            }
        }
    }
    Ok((
        out,
        PoolCtx {
            in_shape: vec![n, c, h, w],
            k,
            stride,
            ceil_mode,
        },
    ))
}

/// Distributes each output gradient uniformly over its contributing cells.
pub fn average_pool2d_backward<S: Scalar>(
    ctx: &PoolCtx,
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = (
        ctx.in_shape[0],
        ctx.in_shape[1],
        ctx.in_shape[2],
        ctx.in_shape[3],
    );
    let (k, stride) = (ctx.k, ctx.stride);
    let oh = pool_out_extent(h, k, stride, ctx.ceil_mode);
    let ow = pool_out_extent(w, k, stride, ctx.ceil_mode);
    if grad_out.shape() != [n, c, oh, ow] {
        return Err(Error::ContextMismatch(format!(
            "pool backward grad {:?}, expected {:?}",
            grad_out.shape(),
            [n, c, oh, ow]
        )));
    }
    let mut gx = Tensor::zeros(ctx.in_shape.clone());
    let gs = grad_out.data();
    let gd = gx.data_mut();
    for plane_ix in 0..n * c {
        let gplane = &gs[plane_ix * oh * ow..(plane_ix + 1) * oh * ow];
        let xplane = &mut gd[plane_ix * h * w..(plane_ix + 1) * h * w];
        for oy in 0..oh {
            let y0 = oy * stride;
            let y1 = (y0 + k).min(h);
            for ox in 0..ow {
                let x0 = ox * stride;
                let x1 = (x0 + k).min(w);
                let count = ((y1 - y0) * (x1 - x0)) as f64;
                let share = gplane[oy * ow + ox] / S::from_f64(count);
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        xplane[yy * w + xx] += share;
                    }
                }
            }
        }
    }
    Ok(gx)
}

/// Per-(batch, channel) mean over all spatial positions: (N,C,H,W) -> (N,C).
pub fn global_average_pool<S: Scalar>(x: &Tensor<S>) -> Result<(Tensor<S>, (usize, usize))> {
    let (n, c, h, w) = shape4(x)?;
    let hw = h * w;
    let inv = S::from_f64(1.0 / hw as f64);
    let mut out = Tensor::zeros(vec![n, c]);
    for (plane_ix, slot) in out.data_mut().iter_mut().enumerate() {
        let mut acc = S::ZERO;
        for &v in &x.data()[plane_ix * hw..(plane_ix + 1) * hw] {
            acc += v;
        }
        *slot = acc * inv;
    }
    Ok((out, (h, w)))
}

/// Backward of GAP: every spatial cell receives g / (h*w).
pub fn global_average_pool_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    spatial: (usize, usize),
) -> Tensor<S> {
    let (n, c) = (grad_out.shape()[0], grad_out.shape()[1]);
    let (h, w) = spatial;
    let inv = S::from_f64(1.0 / (h * w) as f64);
    let mut gx = Tensor::zeros(vec![n, c, h, w]);
    for (plane_ix, chunk) in gx.data_mut().chunks_mut(h * w).enumerate() {
        let share = grad_out.data()[plane_ix] * inv;
        chunk.fill(share);
    }
    gx
}
