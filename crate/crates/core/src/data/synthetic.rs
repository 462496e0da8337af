//! Synthetic blob dataset: each class is a distinct (color, stripe
//! frequency) square on a noisy background, with the blob bounding box
//! recorded for the Grad-CAM localization oracle. Linearly separable by
//! construction.

use crate::data::DatasetRecord;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Half-open pixel box [x0, x1) x [y0, y1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlobBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BlobBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Generates `classes * per_class` records, balanced and bit-identical for a
/// fixed seed. `index_offset` shifts the per-record streams, so held-out
/// batches disjoint from a training set use the same generator.
pub fn make_synthetic_offset(
    classes: usize,
    per_class: usize,
    image_size: usize,
    seed: u64,
    index_offset: usize,
) -> (Vec<DatasetRecord>, Vec<BlobBox>) {
    assert!(classes >= 2, "need at least two classes");
    assert!(image_size >= 16, "image too small for blobs");
    let mut records = Vec::with_capacity(classes * per_class);
    let mut boxes = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        for i in 0..per_class {
            let index = index_offset + i;
            let mut rng = Rng::derive(seed, "synthetic", &[class as u64, index as u64]);
            let (image, blob) = render(class, classes, image_size, &mut rng);
            records.push(DatasetRecord {
                image,
                label: class,
                source_id: format!("class{class}/syn{index}"),
            });
            boxes.push(blob);
        }
    }
    (records, boxes)
}

pub fn make_synthetic(
    classes: usize,
    per_class: usize,
    image_size: usize,
    seed: u64,
) -> (Vec<DatasetRecord>, Vec<BlobBox>) {
    make_synthetic_offset(classes, per_class, image_size, seed, 0)
}

fn render(class: usize, classes: usize, size: usize, rng: &mut Rng) -> (Tensor<f32>, BlobBox) {
    let side = ((size as f64) * rng.uniform(0.40, 0.55)).round() as usize;
    // keep a border margin: zero-padded convolutions behave differently at
    // the image frame, which would contaminate the localization oracle
    let margin = (size / 16).min((size - side) / 2);
    let x0 = margin + rng.below(size - side - 2 * margin + 1);
    let y0 = margin + rng.below(size - side - 2 * margin + 1);
    let blob = BlobBox {
        x0,
        y0,
        x1: x0 + side,
        y1: y0 + side,
    };
    let color = class_color(class, classes);
    let freq = 1.0 + 1.5 * class as f64;
    let plane = size * size;
    let mut data = vec![0.0f32; 3 * plane];
    for y in 0..size {
        for x in 0..size {
            // dim gray noise background
            let noise = rng.uniform(0.35, 0.55);
            for c in 0..3 {
                data[c * plane + y * size + x] = noise as f32;
            }
            if blob.contains(x, y) {
                let phase = (x - x0) as f64 / side as f64;
                let stripe = 0.75 + 0.25 * (std::f64::consts::TAU * freq * phase).sin();
                for c in 0..3 {
                    let v = color[c] * stripe + rng.uniform(-0.02, 0.02);
                    data[c * plane + y * size + x] = v.clamp(0.0, 1.0) as f32;
                }
            }
        }
    }
    (
        Tensor::new(vec![3, size, size], data).expect("sized buffer"),
        blob,
    )
}

fn class_color(class: usize, classes: usize) -> [f64; 3] {
    let hue = class as f64 / classes as f64 * 360.0;
    hsv_to_rgb(hue, 0.9, 0.95)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}
