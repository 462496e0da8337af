//! Checkpoint format: a structured-text manifest (version, dtype, config
//! echo, class names, optimizer state, tensor directory with byte offsets)
//! followed by concatenated little-endian IEEE-754 payloads. The manifest
//! ordering is canonical, so save -> load -> save is byte-identical.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::sepconv::BnOrder;
use crate::model::{Model, ModelConfig, Variant};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Tensor;

const MAGIC: &str = "CLAPCKPT";
const VERSION: u32 = 1;

/// Optimizer state persisted alongside the model so training resumes
/// identically: epoch counter, best validation accuracy, and one velocity
/// tensor per trainable parameter (canonical order).
#[derive(Debug, Clone, PartialEq)]
pub struct OptState<S> {
    pub epoch: usize,
    pub best_val: f64,
    pub velocity: Vec<Tensor<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub model: Model<S>,
    pub class_names: Vec<String>,
    pub opt: Option<OptState<S>>,
}

pub fn checkpoint_to_bytes<S: Scalar>(
    model: &Model<S>,
    class_names: &[String],
    opt: Option<&OptState<S>>,
) -> Vec<u8> {
    let cfg = &model.config;
    let mut manifest = String::new();
    manifest.push_str(&format!("{MAGIC} {VERSION}\n"));
    manifest.push_str(&format!("dtype {}\n", S::DTYPE.name()));
    manifest.push_str(&format!("config.input_h {}\n", cfg.input_size.0));
    manifest.push_str(&format!("config.input_w {}\n", cfg.input_size.1));
    manifest.push_str(&format!("config.in_channels {}\n", cfg.in_channels));
    let widths: Vec<String> = cfg.encoder_widths.iter().map(|w| w.to_string()).collect();
    manifest.push_str(&format!("config.encoder_widths {}\n", widths.join(",")));
    manifest.push_str(&format!("config.encoder_kernel {}\n", cfg.encoder_kernel));
    manifest.push_str(&format!("config.decoder_kernel_a {}\n", cfg.decoder_kernel_a));
    manifest.push_str(&format!("config.decoder_kernel_b {}\n", cfg.decoder_kernel_b));
    manifest.push_str(&format!("config.decoder_width {}\n", cfg.decoder_width));
    manifest.push_str(&format!("config.num_classes {}\n", cfg.num_classes));
    manifest.push_str(&format!("config.variant {}\n", cfg.variant.name()));
    manifest.push_str(&format!("config.dropout_rate {}\n", cfg.dropout_rate));
    manifest.push_str(&format!("config.bn_order {}\n", cfg.bn_order.name()));
    manifest.push_str(&format!("config.seed {}\n", cfg.seed));
    for (i, name) in class_names.iter().enumerate() {
        manifest.push_str(&format!("class {i} {name}\n"));
    }
    if let Some(state) = opt {
        manifest.push_str(&format!("opt.epoch {}\n", state.epoch));
        manifest.push_str(&format!("opt.best_val {}\n", state.best_val));
    }

    // (name, tensor) pairs in canonical order
    let mut named: Vec<(String, Tensor<S>)> = Vec::new();
    model.visit_params(&mut |name, tensor, _| named.push((name, tensor.clone())));
    if let Some(state) = opt {
        let shapes = model.trainable_shapes();
        for ((pname, _), v) in shapes.iter().zip(&state.velocity) {
            named.push((format!("opt.v.{pname}"), v.clone()));
        }
    }
    let width = S::DTYPE.size_bytes();
    let mut offset = 0usize;
    for (name, tensor) in &named {
        let dims: Vec<String> = tensor.shape().iter().map(|e| e.to_string()).collect();
        let len = tensor.len() * width;
        manifest.push_str(&format!("tensor {name} {} {offset} {len}\n", dims.join(" ")));
        offset += len;
    }
    manifest.push_str("data\n");

    let mut out = manifest.into_bytes();
    out.reserve(offset);
    for (_, tensor) in &named {
        for &v in tensor.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn checkpoint_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<Checkpoint<S>> {
    let corrupt = |msg: &str| Error::CorruptCheckpoint(msg.to_string());
    // split manifest from payload at the "data\n" sentinel
    let sentinel = b"\ndata\n";
    let split = bytes
        .windows(sentinel.len())
        .position(|w| w == sentinel)
        .ok_or_else(|| corrupt("missing data sentinel"))?;
    let manifest = std::str::from_utf8(&bytes[..split])
        .map_err(|_| corrupt("manifest is not utf-8"))?;
    let payload = &bytes[split + sentinel.len()..];

    let mut lines = manifest.lines();
    let head = lines.next().ok_or_else(|| corrupt("empty manifest"))?;
    let mut head_fields = head.split_whitespace();
    if head_fields.next() != Some(MAGIC) {
        return Err(corrupt("bad magic"));
    }
    let version: u32 = head_fields
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt("missing version"))?;
    if version != VERSION {
        return Err(Error::CorruptCheckpoint(format!(
            "unsupported version {version}"
        )));
    }

    let mut kv = std::collections::BTreeMap::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut tensors: Vec<(String, Vec<usize>, usize, usize)> = Vec::new();
    for line in lines {
        let mut fields = line.split_whitespace();
        let key = fields.next().ok_or_else(|| corrupt("blank manifest line"))?;
        match key {
            "class" => {
                let ix: usize = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| corrupt("bad class index"))?;
                let name = fields.collect::<Vec<_>>().join(" ");
                if ix != class_names.len() || name.is_empty() {
                    return Err(corrupt("class names out of order"));
                }
                class_names.push(name);
            }
            "tensor" => {
                let name = fields.next().ok_or_else(|| corrupt("tensor without name"))?;
                let rest: Vec<&str> = fields.collect();
                if rest.len() < 3 {
                    return Err(corrupt("short tensor line"));
                }
                let dims: Vec<usize> = rest[..rest.len() - 2]
                    .iter()
                    .map(|v| v.parse().map_err(|_| corrupt("bad tensor extent")))
                    .collect::<Result<_>>()?;
                let offset: usize = rest[rest.len() - 2]
                    .parse()
                    .map_err(|_| corrupt("bad tensor offset"))?;
                let len: usize = rest[rest.len() - 1]
                    .parse()
                    .map_err(|_| corrupt("bad tensor length"))?;
                tensors.push((name.to_string(), dims, offset, len));
            }
            _ => {
                let value = fields.collect::<Vec<_>>().join(" ");
                kv.insert(key.to_string(), value);
            }
        }
    }

    let dtype = kv
        .get("dtype")
        .and_then(|v| Dtype::parse(v))
        .ok_or_else(|| corrupt("missing dtype"))?;
    if dtype != S::DTYPE {
        return Err(Error::CorruptCheckpoint(format!(
            "checkpoint holds {} but {} was requested",
            dtype.name(),
            S::DTYPE.name()
        )));
    }

    let get = |key: &str| -> Result<&String> {
        kv.get(key)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing {key}")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::CorruptCheckpoint(format!("bad {key}")))
    };
    let config = ModelConfig {
        input_size: (parse_usize("config.input_h")?, parse_usize("config.input_w")?),
        in_channels: parse_usize("config.in_channels")?,
        encoder_widths: get("config.encoder_widths")?
            .split(',')
            .map(|v| {
                v.parse()
                    .map_err(|_| corrupt("bad encoder width"))
            })
            .collect::<Result<_>>()?,
        encoder_kernel: parse_usize("config.encoder_kernel")?,
        decoder_kernel_a: parse_usize("config.decoder_kernel_a")?,
        decoder_kernel_b: parse_usize("config.decoder_kernel_b")?,
        decoder_width: parse_usize("config.decoder_width")?,
        num_classes: parse_usize("config.num_classes")?,
        variant: Variant::parse(get("config.variant")?)
            .ok_or_else(|| corrupt("bad variant"))?,
        dropout_rate: get("config.dropout_rate")?
            .parse()
            .map_err(|_| corrupt("bad dropout_rate"))?,
        bn_order: BnOrder::parse(get("config.bn_order")?)
            .ok_or_else(|| corrupt("bad bn_order"))?,
        seed: get("config.seed")?
            .parse()
            .map_err(|_| corrupt("bad seed"))?,
    };
    let mut model: Model<S> =
        Model::build(config).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;

    // validate the tensor directory: contiguous offsets, payload covered
    let width = S::DTYPE.size_bytes();
    let mut expected_offset = 0usize;
    for (name, dims, offset, len) in &tensors {
        let count: usize = dims.iter().product();
        if *offset != expected_offset || *len != count * width {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor {name} directory entry is inconsistent"
            )));
        }
        expected_offset += len;
    }
    if expected_offset != payload.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "payload holds {} bytes, directory expects {expected_offset}",
            payload.len()
        )));
    }

    let read_tensor = |dims: &[usize], offset: usize, len: usize| -> Tensor<S> {
        let data = payload[offset..offset + len]
            .chunks_exact(width)
            .map(S::read_le)
            .collect();
        Tensor::new(dims.to_vec(), data).expect("directory was validated")
    };

    let mut by_name: std::collections::BTreeMap<String, (Vec<usize>, usize, usize)> =
        std::collections::BTreeMap::new();
    for (name, dims, offset, len) in tensors {
        if by_name.insert(name.clone(), (dims, offset, len)).is_some() {
            return Err(Error::CorruptCheckpoint(format!("duplicate tensor {name}")));
        }
    }

    let mut missing: Vec<String> = Vec::new();
    let mut mismatch: Vec<String> = Vec::new();
    model.visit_params_mut(&mut |name, tensor, _| {
        match by_name.remove(&name) {
            None => missing.push(name),
            Some((dims, offset, len)) => {
                if dims != tensor.shape() {
                    mismatch.push(name);
                } else {
                    *tensor = read_tensor(&dims, offset, len);
                }
            }
        }
    });
    if let Some(name) = missing.first() {
        return Err(Error::CorruptCheckpoint(format!("missing tensor {name}")));
    }
    if let Some(name) = mismatch.first() {
        return Err(Error::CorruptCheckpoint(format!(
            "tensor {name} shape does not match the config"
        )));
    }

    let opt = if kv.contains_key("opt.epoch") {
        let epoch = parse_usize("opt.epoch")?;
        let best_val: f64 = get("opt.best_val")?
            .parse()
            .map_err(|_| corrupt("bad opt.best_val"))?;
        let mut velocity = Vec::new();
        for (pname, shape) in model.trainable_shapes() {
            let key = format!("opt.v.{pname}");
            let (dims, offset, len) = by_name
                .remove(&key)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor {key}")))?;
            if dims != shape {
                return Err(Error::CorruptCheckpoint(format!(
                    "velocity {key} shape does not match its parameter"
                )));
            }
            velocity.push(read_tensor(&dims, offset, len));
        }
        Some(OptState {
            epoch,
            best_val,
            velocity,
        })
    } else {
        None
    };
    if let Some(name) = by_name.keys().next() {
        return Err(Error::CorruptCheckpoint(format!("unexpected tensor {name}")));
    }

    Ok(Checkpoint {
        model,
        class_names,
        opt,
    })
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    model: &Model<S>,
    class_names: &[String],
    opt: Option<&OptState<S>>,
) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(model, class_names, opt))?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small_config() -> ModelConfig {
        ModelConfig {
            input_size: (8, 8),
            encoder_widths: vec![4, 8],
            decoder_width: 8,
            num_classes: 3,
            seed: 11,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let model: Model<f32> = Model::build(small_config()).unwrap();
        let names = vec!["a".into(), "b".into(), "c".into()];
        let velocity: Vec<Tensor<f32>> = model
            .trainable_shapes()
            .into_iter()
            .map(|(_, shape)| Tensor::full(shape, 0.25))
            .collect();
        let opt = OptState {
            epoch: 7,
            best_val: 0.875,
            velocity,
        };
        let bytes = checkpoint_to_bytes(&model, &names, Some(&opt));
        let loaded: Checkpoint<f32> = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(loaded.class_names, names);
        assert_eq!(loaded.opt.as_ref().unwrap().epoch, 7);
        let again = checkpoint_to_bytes(&loaded.model, &loaded.class_names, loaded.opt.as_ref());
        assert_eq!(bytes, again);
    }

    #[test]
    fn round_trip_preserves_every_tensor_bit_exactly() {
        let model: Model<f32> = Model::build(small_config()).unwrap();
        let bytes = checkpoint_to_bytes(&model, &[], None);
        let loaded: Checkpoint<f32> = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(loaded.model, model);
    }

    #[test]
    fn truncated_bytes_are_corrupt() {
        let model: Model<f32> = Model::build(small_config()).unwrap();
        let bytes = checkpoint_to_bytes(&model, &[], None);
        let short = &bytes[..bytes.len() - 5];
        assert!(matches!(
            checkpoint_from_bytes::<f32>(short),
            Err(Error::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn wrong_dtype_is_corrupt() {
        let model: Model<f32> = Model::build(small_config()).unwrap();
        let bytes = checkpoint_to_bytes(&model, &[], None);
        assert!(matches!(
            checkpoint_from_bytes::<f64>(&bytes),
            Err(Error::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(
            checkpoint_from_bytes::<f32>(b"not a checkpoint"),
            Err(Error::CorruptCheckpoint(_))
        ));
    }
}
