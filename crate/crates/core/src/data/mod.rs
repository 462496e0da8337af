//! Image decoding (PPM-P6 and the raw tensor interchange format), the
//! class-per-directory dataset layout, augmentation, stratified splits, and
//! the synthetic blob generator used for desk-scale verification.

pub mod augment;
pub mod split;
pub mod synthetic;

pub use augment::{augment, augment_with, AugmentConfig, AugmentParams};
pub use split::{split, SplitSpec};
pub use synthetic::{make_synthetic, BlobBox};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One decoded image with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    /// (3, H, W) tensor with values in [0, 1].
    pub image: Tensor<f32>,
    pub label: usize,
    pub source_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    PpmP6,
    RawTensor,
}

pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<Tensor<f32>> {
    match format {
        ImageFormat::PpmP6 => decode_ppm(bytes),
        ImageFormat::RawTensor => decode_raw(bytes),
    }
}

/// Binary PPM (P6, maxval <= 255) into a planar (3, H, W) tensor in [0, 1].
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and # comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedImage("truncated ppm header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(bytes)? != "P6" {
        return Err(Error::MalformedImage("not a P6 ppm".into()));
    }
    let parse = |t: String| -> Result<usize> {
        t.parse()
            .map_err(|_| Error::MalformedImage(format!("bad ppm field {t:?}")))
    };
    let w = parse(token(bytes)?)?;
    let h = parse(token(bytes)?)?;
    let maxval = parse(token(bytes)?)?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return Err(Error::MalformedImage(format!(
            "unsupported ppm geometry {w}x{h} maxval {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedImage("missing ppm payload separator".into()));
    }
    pos += 1;
    let need = w * h * 3;
    let payload = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::MalformedImage("truncated ppm payload".into()))?;
    let scale = 1.0 / maxval as f32;
    let mut data = vec![0.0f32; need];
    for y in 0..h {
        for x in 0..w {
            let src = (y * w + x) * 3;
            for c in 0..3 {
                data[c * h * w + y * w + x] = payload[src + c] as f32 * scale;
            }
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Encodes a (3, H, W) tensor in [0, 1] as binary PPM.
pub fn encode_ppm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::ShapeMismatch(format!("encode_ppm expects (3, H, W), got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = image.data()[c * h * w + y * w + x].clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

/// Raw tensor interchange bytes into a (3, H, W) record image. Values must
/// already lie in [0, 1].
pub fn decode_raw(bytes: &[u8]) -> Result<Tensor<f32>> {
    let t = Tensor::<f32>::read_raw(&mut &bytes[..])?;
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::MalformedImage(format!(
            "raw record must be (3, H, W), got {s:?}"
        )));
    }
    if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::MalformedImage("raw record values outside [0, 1]".into()));
    }
    Ok(t)
}

/// Loads the class-per-subdirectory layout: subdirectory names (sorted)
/// become the class index mapping; `.ppm` and `.rt` files become records.
pub fn load_dataset_dir(path: &Path) -> Result<(Vec<DatasetRecord>, Vec<String>)> {
    let mut class_dirs: Vec<(String, std::path::PathBuf)> = Vec::new();
    let entries =
        fs::read_dir(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    for entry in entries {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            class_dirs.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    class_dirs.sort();
    let mut records = Vec::new();
    let mut class_names = Vec::new();
    for (label, (name, dir)) in class_dirs.iter().enumerate() {
        class_names.push(name.clone());
        let mut files: Vec<std::path::PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("ppm") | Some("rt")
                )
            })
            .collect();
        files.sort();
        for file in files {
            let bytes = fs::read(&file)?;
            let format = match file.extension().and_then(|e| e.to_str()) {
                Some("ppm") => ImageFormat::PpmP6,
                _ => ImageFormat::RawTensor,
            };
            let image = decode_image(&bytes, format)
                .map_err(|e| Error::MalformedImage(format!("{}: {e}", file.display())))?;
            records.push(DatasetRecord {
                image,
                label,
                source_id: format!("{name}/{}", file.file_name().unwrap().to_string_lossy()),
            });
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((records, class_names))
}

/// Class name -> index mapping, one `index name` line per class.
pub fn manifest_bytes(class_names: &[String]) -> Vec<u8> {
    let mut out = String::new();
    for (i, name) in class_names.iter().enumerate() {
        out.push_str(&format!("{i} {name}\n"));
    }
    out.into_bytes()
}
