//! Nearest-neighbor upsampling: each cell replicates into a factor x factor
//! block; the backward pass sums gradients over each block.

use crate::error::Result;
use crate::layers::conv::shape4;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn nearest_upsample<S: Scalar>(x: &Tensor<S>, factor: usize) -> Result<Tensor<S>> {
    debug_assert!(factor >= 1);
    let (n, c, h, w) = shape4(x)?;
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros(vec![n, c, oh, ow]);
    let xs = x.data();
    let od = out.data_mut();
    for plane_ix in 0..n * c {
        let xin = &xs[plane_ix * h * w..(plane_ix + 1) * h * w];
        let oplane = &mut od[plane_ix * oh * ow..(plane_ix + 1) * oh * ow];
        for oy in 0..oh {
            let iy = oy / factor;
            for ox in 0..ow {
                oplane[oy * ow + ox] = xin[iy * w + ox / factor];
            }
        }
    }
    Ok(out)
}

pub fn nearest_upsample_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    factor: usize,
) -> Result<Tensor<S>> {
    let (n, c, oh, ow) = shape4(grad_out)?;
    let (h, w) = (oh / factor, ow / factor);
    let mut gx = Tensor::zeros(vec![n, c, h, w]);
    let gs = grad_out.data();
    let gd = gx.data_mut();
    for plane_ix in 0..n * c {
        let gplane = &gs[plane_ix * oh * ow..(plane_ix + 1) * oh * ow];
        let xplane = &mut gd[plane_ix * h * w..(plane_ix + 1) * h * w];
        for oy in 0..oh {
            let iy = oy / factor;
            for ox in 0..ow {
                xplane[iy * w + ox / factor] += gplane[oy * ow + ox];
            }
        }
    }
    Ok(gx)
}
