//! Augmentation recipe: rotate by U(-25, +25) degrees and zoom by
//! U(0.75, 1.25) on a square canvas (bilinear sampling, edge-replicate
//! fill), then take a random crop. The default canvas/crop pair is 256/224.

use crate::data::DatasetRecord;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const ROTATION_DEGREES: f64 = 25.0;
pub const SCALE_DELTA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    pub canvas: usize,
    pub crop: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            canvas: 256,
            crop: 224,
        }
    }
}

impl AugmentConfig {
    /// Canvas/crop pair for an arbitrary crop size, keeping the 256:224
    /// ratio of the default recipe.
    pub fn for_crop(crop: usize) -> Self {
        let canvas = ((crop * 8 + 3) / 7).max(crop + 2);
        AugmentConfig { canvas, crop }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f64,
    pub scale: f64,
    pub crop_x: usize,
    pub crop_y: usize,
}

impl AugmentParams {
    /// Identity transform with a centered crop.
    pub fn identity(cfg: &AugmentConfig) -> Self {
        AugmentParams {
            angle_deg: 0.0,
            scale: 1.0,
            crop_x: (cfg.canvas - cfg.crop) / 2,
            crop_y: (cfg.canvas - cfg.crop) / 2,
        }
    }
}

pub fn sample_params(rng: &mut Rng, cfg: &AugmentConfig) -> AugmentParams {
    AugmentParams {
        angle_deg: rng.uniform(-ROTATION_DEGREES, ROTATION_DEGREES),
        scale: rng.uniform(1.0 - SCALE_DELTA, 1.0 + SCALE_DELTA),
        crop_x: rng.below(cfg.canvas - cfg.crop + 1),
        crop_y: rng.below(cfg.canvas - cfg.crop + 1),
    }
}

/// Draws rotation/scale/crop parameters and applies them. The label never
/// changes and the output is always (3, crop, crop).
pub fn augment(
    rec: &DatasetRecord,
    rng: &mut Rng,
    cfg: &AugmentConfig,
) -> Result<(DatasetRecord, AugmentParams)> {
    let params = sample_params(rng, cfg);
    Ok((augment_with(rec, &params, cfg)?, params))
}

/// Applies explicit parameters: one pass composes the resize onto the canvas
/// with the inverse rotation/zoom map, then crops.
pub fn augment_with(
    rec: &DatasetRecord,
    params: &AugmentParams,
    cfg: &AugmentConfig,
) -> Result<DatasetRecord> {
    let s = rec.image.shape();
    let (h, w) = (s[1], s[2]);
    if h < 32 || w < 32 {
        return Err(Error::DegenerateInput(format!(
            "augment needs at least 32x32, got {h}x{w}"
        )));
    }
    debug_assert!(params.crop_x + cfg.crop <= cfg.canvas);
    debug_assert!(params.crop_y + cfg.crop <= cfg.canvas);
    let canvas = cfg.canvas;
    let crop = cfg.crop;
    let mid = (canvas - 1) as f64 / 2.0;
    let theta = params.angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let inv_scale = 1.0 / params.scale;
    // corner-aligned canvas -> source mapping; identity when the input
    // already matches the canvas size
    let ry = if canvas > 1 {
        (h - 1) as f64 / (canvas - 1) as f64
    } else {
        0.0
    };
    let rx = if canvas > 1 {
        (w - 1) as f64 / (canvas - 1) as f64
    } else {
        0.0
    };
    let src = rec.image.data();
    let plane = h * w;
    let mut out = vec![0.0f32; 3 * crop * crop];
    for py in 0..crop {
        let dy = (py + params.crop_y) as f64 - mid;
        for px in 0..crop {
            let dx = (px + params.crop_x) as f64 - mid;
            let qx = mid + (cos * dx - sin * dy) * inv_scale;
            let qy = mid + (sin * dx + cos * dy) * inv_scale;
            let sx = (qx * rx).clamp(0.0, (w - 1) as f64);
            let sy = (qy * ry).clamp(0.0, (h - 1) as f64);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            for c in 0..3 {
                let base = c * plane;
                let v00 = src[base + y0 * w + x0] as f64;
                let v01 = src[base + y0 * w + x1] as f64;
                let v10 = src[base + y1 * w + x0] as f64;
                let v11 = src[base + y1 * w + x1] as f64;
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                out[c * crop * crop + py * crop + px] = (top + (bot - top) * fy) as f32;
            }
        }
    }
    Ok(DatasetRecord {
        image: Tensor::new(vec![3, crop, crop], out)?,
        label: rec.label,
        source_id: rec.source_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(image: Tensor<f32>) -> DatasetRecord {
        DatasetRecord {
            image,
            label: 3,
            source_id: "t/0".into(),
        }
    }

    #[test]
    fn identity_params_center_crop_exactly() {
        let cfg = AugmentConfig::default();
        let image = Tensor::from_fn(vec![3, 256, 256], |i| ((i * 31) % 256) as f32 / 255.0);
        let rec = record(image.clone());
        let out = augment_with(&rec, &AugmentParams::identity(&cfg), &cfg).unwrap();
        assert_eq!(out.image.shape(), &[3, 224, 224]);
        assert_eq!(out.label, rec.label);
        for c in 0..3 {
            for y in 0..224 {
                for x in 0..224 {
                    let want = image.data()[c * 256 * 256 + (y + 16) * 256 + (x + 16)];
                    let got = out.image.data()[c * 224 * 224 + y * 224 + x];
                    assert_eq!(got, want, "pixel ({c},{y},{x})");
                }
            }
        }
    }

    #[test]
    fn output_shape_and_label_contract() {
        let cfg = AugmentConfig::default();
        let mut rng = Rng::seed(9);
        let image = Tensor::from_fn(vec![3, 64, 80], |_| rng.next_f64() as f32);
        let rec = record(image);
        for _ in 0..20 {
            let (out, params) = augment(&rec, &mut rng, &cfg).unwrap();
            assert_eq!(out.image.shape(), &[3, 224, 224]);
            assert_eq!(out.label, rec.label);
            assert!(params.angle_deg.abs() <= ROTATION_DEGREES);
            assert!((0.75..=1.25).contains(&params.scale));
        }
    }

    #[test]
    fn rejects_tiny_inputs() {
        let cfg = AugmentConfig::default();
        let rec = record(Tensor::zeros(vec![3, 16, 16]));
        assert!(matches!(
            augment_with(&rec, &AugmentParams::identity(&cfg), &cfg),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn mirror_symmetric_pattern_rotates_symmetrically() {
        // pattern symmetric under x -> -x about the center: rotating by
        // -theta equals the horizontal mirror of rotating by +theta
        let cfg = AugmentConfig {
            canvas: 128,
            crop: 96,
        };
        let n = 128usize;
        let image = Tensor::from_fn(vec![3, n, n], |i| {
            let c = i / (n * n);
            let rem = i % (n * n);
            let y = (rem / n) as f64 - (n - 1) as f64 / 2.0;
            let x = (rem % n) as f64 - (n - 1) as f64 / 2.0;
            let v = (0.03 * x * x).cos() * (0.011 * y * y).sin() * 0.5 + 0.5;
            (v * (1.0 + c as f64) / 3.0) as f32
        });
        let rec = record(image);
        let center = (cfg.canvas - cfg.crop) / 2;
        for &theta in &[7.5, 16.0, 24.9] {
            let plus = augment_with(
                &rec,
                &AugmentParams {
                    angle_deg: theta,
                    scale: 1.0,
                    crop_x: center,
                    crop_y: center,
                },
                &cfg,
            )
            .unwrap();
            let minus = augment_with(
                &rec,
                &AugmentParams {
                    angle_deg: -theta,
                    scale: 1.0,
                    crop_x: center,
                    crop_y: center,
                },
                &cfg,
            )
            .unwrap();
            let crop = cfg.crop;
            let mut max_diff = 0.0f64;
            for c in 0..3 {
                for y in 0..crop {
                    for x in 0..crop {
                        let a = plus.image.data()[c * crop * crop + y * crop + x] as f64;
                        let b =
                            minus.image.data()[c * crop * crop + y * crop + (crop - 1 - x)] as f64;
                        max_diff = max_diff.max((a - b).abs());
                    }
                }
            }
            assert!(max_diff < 1e-6, "theta {theta}: max diff {max_diff}");
        }
    }

    #[test]
    fn for_crop_keeps_default_ratio() {
        assert_eq!(
            AugmentConfig::for_crop(224),
            AugmentConfig {
                canvas: 256,
                crop: 224
            }
        );
        let small = AugmentConfig::for_crop(64);
        assert!(small.canvas > small.crop);
    }
}
