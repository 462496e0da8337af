//! Depthwise and pointwise convolutions with hand-written backward passes.
//! Output chunks (one spatial plane per task) are disjoint, so the parallel
//! split never changes accumulation order within an element.

use crate::error::{Error, Result};
use crate::parallel::{for_each_chunk, map_indexed, Exec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Output extent of a convolution along one spatial axis.
pub fn conv_out_extent(extent: usize, k: usize, stride: usize, padding: Padding) -> usize {
    let pad = match padding {
        Padding::Same => (k - 1) / 2,
        Padding::Valid => 0,
    };
    (extent + 2 * pad).saturating_sub(k) / stride + 1
}

fn pad_of(k: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => (k - 1) / 2,
        Padding::Valid => 0,
    }
}

#[inline]
fn axpy<S: Scalar>(out: &mut [S], w: S, x: &[S]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += w * v;
    }
}

/// Eight-lane dot product with a fixed lane-to-index assignment, so the
/// summation order never depends on run or worker count.
#[inline]
fn dot_lanes<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut lanes = [S::ZERO; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] += xa[l] * xb[l];
        }
    }
    let mut tail = S::ZERO;
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
        + tail
}

/// Per-channel spatial convolution. `x` is (N, C, H, W), `kernel` is (C, k, k).
pub fn depthwise_forward<S: Scalar>(
    x: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: Padding,
    exec: Exec,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = shape4(x)?;
    let ks = kernel.shape();
    if ks.len() != 3 || ks[0] != c || ks[1] != ks[2] {
        return Err(Error::ShapeMismatch(format!(
            "depthwise kernel {:?} does not match input channels {c}",
            ks
        )));
    }
    let k = ks[1];
    if k % 2 == 0 {
        return Err(Error::ShapeMismatch(format!("kernel size {k} must be odd")));
    }
    let pad = pad_of(k, padding);
    let (oh, ow) = (
        conv_out_extent(h, k, stride, padding),
        conv_out_extent(w, k, stride, padding),
    );
    if oh == 0 || ow == 0 {
        return Err(Error::ShapeMismatch(format!(
            "depthwise output collapses: input {h}x{w}, kernel {k}, stride {stride}"
        )));
    }
    let mut out = Tensor::zeros(vec![n, c, oh, ow]);
    let xs = x.data();
    let kd = kernel.data();
    for_each_chunk(exec, out.data_mut(), oh * ow, |plane_ix, plane| {
        let ci = plane_ix % c;
        let xin = &xs[plane_ix * h * w..(plane_ix + 1) * h * w];
        let kin = &kd[ci * k * k..(ci + 1) * k * k];
        if stride == 1 {
            // one shifted-row axpy per kernel tap, in fixed tap order
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = kin[ky * k + kx];
                    let (ox_lo, ix_lo) = if kx >= pad { (0, kx - pad) } else { (pad - kx, 0) };
                    let span = w.saturating_sub(ix_lo).min(ow.saturating_sub(ox_lo));
                    if span == 0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let xrow = &xin[(iy - pad) * w + ix_lo..(iy - pad) * w + ix_lo + span];
                        let orow = &mut plane[oy * ow + ox_lo..oy * ow + ox_lo + span];
                        axpy(orow, wgt, xrow);
                    }
                }
            }
        } else {
            for oy in 0..oh {
                let iy0 = (oy * stride) as isize - pad as isize;
                let ky_lo = (-iy0).max(0) as usize;
                let ky_hi = k.min((h as isize - iy0).max(0) as usize);
                for ox in 0..ow {
                    let ix0 = (ox * stride) as isize - pad as isize;
                    let kx_lo = (-ix0).max(0) as usize;
                    let kx_hi = k.min((w as isize - ix0).max(0) as usize);
                    let mut acc = S::ZERO;
                    for ky in ky_lo..ky_hi {
                        let iy = (iy0 + ky as isize) as usize;
                        let row = &xin[iy * w..(iy + 1) * w];
                        let krow = &kin[ky * k..(ky + 1) * k];
                        for kx in kx_lo..kx_hi {
                            let ix = (ix0 + kx as isize) as usize;
                            acc += row[ix] * krow[kx];
                        }
                    }
                    plane[oy * ow + ox] = acc;
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of the depthwise convolution: returns (grad_input, grad_kernel).
pub fn depthwise_backward<S: Scalar>(
    x: &Tensor<S>,
    kernel: &Tensor<S>,
    grad_out: &Tensor<S>,
    stride: usize,
    padding: Padding,
    exec: Exec,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let (n, c, h, w) = shape4(x)?;
    let (gn, gc, oh, ow) = shape4(grad_out)?;
    if gn != n || gc != c {
        return Err(Error::ContextMismatch(format!(
            "depthwise grad {:?} does not match input {:?}",
            grad_out.shape(),
            x.shape()
        )));
    }
    let k = kernel.shape()[1];
    let pad = pad_of(k, padding);
    let xs = x.data();
    let gs = grad_out.data();
    let kd = kernel.data();

    let mut gx = Tensor::zeros(vec![n, c, h, w]);
    for_each_chunk(exec, gx.data_mut(), h * w, |plane_ix, plane| {
        let ci = plane_ix % c;
        let gplane = &gs[plane_ix * oh * ow..(plane_ix + 1) * oh * ow];
        let kin = &kd[ci * k * k..(ci + 1) * k * k];
        if stride == 1 {
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = kin[ky * k + kx];
                    let (ox_lo, ix_lo) = if kx >= pad { (0, kx - pad) } else { (pad - kx, 0) };
                    let span = w.saturating_sub(ix_lo).min(ow.saturating_sub(ox_lo));
                    if span == 0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let grow = &gplane[oy * ow + ox_lo..oy * ow + ox_lo + span];
                        let xrow =
                            &mut plane[(iy - pad) * w + ix_lo..(iy - pad) * w + ix_lo + span];
                        axpy(xrow, wgt, grow);
                    }
                }
            }
        } else {
            for oy in 0..oh {
                let iy0 = (oy * stride) as isize - pad as isize;
                for ox in 0..ow {
                    let ix0 = (ox * stride) as isize - pad as isize;
                    let g = gplane[oy * ow + ox];
                    for ky in 0..k {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            plane[iy as usize * w + ix as usize] += g * kin[ky * k + kx];
                        }
                    }
                }
            }
        }
    });

    let mut gk = Tensor::zeros(vec![c, k, k]);
    for_each_chunk(exec, gk.data_mut(), k * k, |ci, kplane| {
        for ni in 0..n {
            let xin = &xs[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
            let gplane = &gs[(ni * c + ci) * oh * ow..(ni * c + ci + 1) * oh * ow];
            if stride == 1 {
                for ky in 0..k {
                    for kx in 0..k {
                        let (ox_lo, ix_lo) =
                            if kx >= pad { (0, kx - pad) } else { (pad - kx, 0) };
                        let span = w.saturating_sub(ix_lo).min(ow.saturating_sub(ox_lo));
                        if span == 0 {
                            continue;
                        }
                        let mut acc = S::ZERO;
                        for oy in 0..oh {
                            let iy = oy + ky;
                            if iy < pad || iy - pad >= h {
                                continue;
                            }
                            let grow = &gplane[oy * ow + ox_lo..oy * ow + ox_lo + span];
                            let xrow =
                                &xin[(iy - pad) * w + ix_lo..(iy - pad) * w + ix_lo + span];
                            acc += dot_lanes(grow, xrow);
                        }
                        kplane[ky * k + kx] += acc;
                    }
                }
            } else {
                for oy in 0..oh {
                    let iy0 = (oy * stride) as isize - pad as isize;
                    for ox in 0..ow {
                        let ix0 = (ox * stride) as isize - pad as isize;
                        let g = gplane[oy * ow + ox];
                        for ky in 0..k {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                kplane[ky * k + kx] += g * xin[iy as usize * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok((gx, gk))
}

/// 1x1 cross-channel convolution. `kernel` is (C_in, C_out), `bias` is (C_out):
/// out[n,o,h,w] = bias[o] + sum_c x[n,c,h,w] * kernel[c,o].
pub fn pointwise_forward<S: Scalar>(
    x: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: &Tensor<S>,
    exec: Exec,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = shape4(x)?;
    let ks = kernel.shape();
    if ks.len() != 2 || ks[0] != c {
        return Err(Error::ShapeMismatch(format!(
            "pointwise kernel {:?} does not match input channels {c}",
            ks
        )));
    }
    let o = ks[1];
    if bias.shape() != [o] {
        return Err(Error::ShapeMismatch(format!(
            "pointwise bias {:?} does not match output channels {o}",
            bias.shape()
        )));
    }
    let hw = h * w;
    let xs = x.data();
    let kd = kernel.data();
    let bd = bias.data();
    let mut out = Tensor::zeros(vec![n, o, h, w]);
    for_each_chunk(exec, out.data_mut(), hw, |plane_ix, plane| {
        let ni = plane_ix / o;
        let oi = plane_ix % o;
        plane.fill(bd[oi]);
        for ci in 0..c {
            let wgt = kd[ci * o + oi];
            let xin = &xs[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
            for (acc, &v) in plane.iter_mut().zip(xin) {
                *acc += wgt * v;
            }
        }
    });
    Ok(out)
}

/// Gradients of the pointwise convolution: (grad_input, grad_kernel, grad_bias).
pub fn pointwise_backward<S: Scalar>(
    x: &Tensor<S>,
    kernel: &Tensor<S>,
    grad_out: &Tensor<S>,
    exec: Exec,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (n, c, h, w) = shape4(x)?;
    let o = kernel.shape()[1];
    let (gn, go, gh, gw) = shape4(grad_out)?;
    if gn != n || go != o || gh != h || gw != w {
        return Err(Error::ContextMismatch(format!(
            "pointwise grad {:?} does not match input {:?}",
            grad_out.shape(),
            x.shape()
        )));
    }
    let hw = h * w;
    let xs = x.data();
    let gs = grad_out.data();
    let kd = kernel.data();

    let mut gx = Tensor::zeros(vec![n, c, h, w]);
    for_each_chunk(exec, gx.data_mut(), hw, |plane_ix, plane| {
        let ni = plane_ix / c;
        let ci = plane_ix % c;
        for oi in 0..o {
            let wgt = kd[ci * o + oi];
            let gin = &gs[(ni * o + oi) * hw..(ni * o + oi + 1) * hw];
            for (acc, &g) in plane.iter_mut().zip(gin) {
                *acc += wgt * g;
            }
        }
    });

    let mut gk = Tensor::zeros(vec![c, o]);
    for_each_chunk(exec, gk.data_mut(), o, |ci, row| {
        for ni in 0..n {
            let xin = &xs[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
            for (oi, slot) in row.iter_mut().enumerate() {
                let gin = &gs[(ni * o + oi) * hw..(ni * o + oi + 1) * hw];
                *slot += dot_lanes(xin, gin);
            }
        }
    });

    let mut gb = Tensor::zeros(vec![o]);
    map_indexed(exec, gb.data_mut(), |oi| {
        let mut acc = S::ZERO;
        for ni in 0..n {
            for &g in &gs[(ni * o + oi) * hw..(ni * o + oi + 1) * hw] {
                acc += g;
            }
        }
        acc
    });
    Ok((gx, gk, gb))
}

pub(crate) fn shape4<S: Scalar>(t: &Tensor<S>) -> Result<(usize, usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "expected a (N, C, H, W) tensor, got {s:?}"
        )));
    }
    Ok((s[0], s[1], s[2], s[3]))
}
