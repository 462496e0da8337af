//! Gradient-weighted class activation maps: per-channel weights are the
//! spatially averaged gradients of the class logit at a convolutional stage,
//! the weighted activation sum is rectified, upscaled bilinearly to the input
//! size, and min-max normalized to [0, 1].

use crate::error::{Error, Result};
use crate::layers::norm::Mode;
use crate::model::Model;
use crate::parallel::Exec;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn grad_cam<S: Scalar>(
    model: &Model<S>,
    image: &Tensor<S>,
    class_index: usize,
    target_layer: &str,
    exec: Exec,
) -> Result<Tensor<S>> {
    let k = model.config.num_classes;
    if class_index >= k {
        return Err(Error::InvalidLabel {
            label: class_index,
            classes: k,
        });
    }
    if !model.layer_names().iter().any(|n| n == target_layer) {
        return Err(Error::InvalidLayer {
            name: target_layer.to_string(),
            available: model.layer_names(),
        });
    }
    let (_, ctx) = model.forward_ctx(image, Mode::Infer, None, exec)?;
    // d(logit_c)/d(activation): seed the backward pass with a one-hot row
    let mut glogits = Tensor::zeros(vec![image.shape()[0], k]);
    glogits.data_mut()[class_index] = S::ONE;
    let (_, captured) = model.backward(&ctx, &glogits, exec, Some(target_layer))?;
    let grad = captured.expect("capture layer was validated");
    let act = stage_activation(&ctx, model, target_layer)?;

    let (c, h, w) = (act.shape()[1], act.shape()[2], act.shape()[3]);
    let hw = h * w;
    let mut cam = vec![S::ZERO; hw];
    for ci in 0..c {
        let mut weight = S::ZERO;
        for &g in &grad.data()[ci * hw..(ci + 1) * hw] {
            weight += g;
        }
        weight /= S::from_f64(hw as f64);
        let plane = &act.data()[ci * hw..(ci + 1) * hw];
        for (acc, &a) in cam.iter_mut().zip(plane) {
            *acc += weight * a;
        }
    }
    for v in cam.iter_mut() {
        *v = v.maximum(S::ZERO);
    }

    let (out_h, out_w) = (image.shape()[2], image.shape()[3]);
    let mut up = bilinear_upscale(&cam, h, w, out_h, out_w);

    let mut lo = up[0];
    let mut hi = up[0];
    for &v in &up {
        lo = lo.minimum(v);
        hi = hi.maximum(v);
    }
    if hi.to_f64() - lo.to_f64() <= 0.0 {
        // a class score independent of the layer yields a zero map
        up.fill(S::ZERO);
    } else {
        let span = hi - lo;
        for v in up.iter_mut() {
            *v = (*v - lo) / span;
        }
    }
    Tensor::new(vec![out_h, out_w], up)
}

/// Peak position (x, y) of a heatmap. Clamped bilinear upscaling produces
/// exactly tied plateaus along edges, so the centroid of the maximal set is
/// returned rather than the first tied index.
pub fn heatmap_argmax<S: Scalar>(map: &Tensor<S>) -> (usize, usize) {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut top = map.data()[0];
    for &v in map.data() {
        top = top.maximum(v);
    }
    let mut sx = 0usize;
    let mut sy = 0usize;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if map.data()[y * w + x] == top {
                sx += x;
                sy += y;
                count += 1;
            }
        }
    }
    (sx / count, sy / count)
}

fn stage_activation<'a, S: Scalar>(
    ctx: &'a crate::model::ForwardCtx<S>,
    model: &Model<S>,
    target: &str,
) -> Result<&'a Tensor<S>> {
    for (i, block) in model.encoder.iter().enumerate() {
        if block.name == target {
            return Ok(&ctx.enc.outputs[i]);
        }
    }
    let dec = ctx
        .dec
        .as_ref()
        .ok_or_else(|| Error::InvalidLayer {
            name: target.to_string(),
            available: model.layer_names(),
        })?;
    for (j, block) in model.decoder.iter().enumerate() {
        if block.name == target {
            return Ok(&dec.outputs[j]);
        }
    }
    Ok(dec.map5())
}

/// Pixel-center aligned bilinear interpolation from (h, w) to (oh, ow).
fn bilinear_upscale<S: Scalar>(src: &[S], h: usize, w: usize, oh: usize, ow: usize) -> Vec<S> {
    let mut out = vec![S::ZERO; oh * ow];
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    for oy in 0..oh {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..ow {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            let v00 = src[y0 * w + x0].to_f64();
            let v01 = src[y0 * w + x1].to_f64();
            let v10 = src[y1 * w + x0].to_f64();
            let v11 = src[y1 * w + x1].to_f64();
            let top = v00 + (v01 - v00) * wx;
            let bot = v10 + (v11 - v10) * wx;
            out[oy * ow + ox] = S::from_f64(top + (bot - top) * wy);
        }
    }
    out
}
