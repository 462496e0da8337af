//! Shared plumbing: exit-code taxonomy, run directories, the config echo,
//! dataset resolution, and width derivation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap_core::data::augment::{augment_with, AugmentConfig, AugmentParams};
use clap_core::data::{load_dataset_dir, make_synthetic, manifest_bytes, DatasetRecord};
use clap_core::error::Error;
use clap_core::layers::sepconv::BnOrder;
use clap_core::model::{ModelConfig, Variant};

use crate::args::{DataArgs, ModelArgs};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_CORRUPT: i32 = 4;
pub const EXIT_BAD_REFERENCE: i32 = 5;

pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::DivergenceDetected { .. } => EXIT_DIVERGENCE,
            Error::CorruptCheckpoint(_) => EXIT_CORRUPT,
            Error::InvalidLayer { .. } => EXIT_BAD_REFERENCE,
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Run directory: --out, or $CLAP_OUT_DIR (default ./runs) plus a timestamped
/// name. Every artifact of a command lands inside it.
pub fn resolve_run_dir(out: Option<&Path>, command: &str) -> CliResult<PathBuf> {
    let dir = match out {
        Some(path) => path.to_path_buf(),
        None => {
            let root = std::env::var("CLAP_OUT_DIR").unwrap_or_else(|_| "runs".into());
            let stamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from(root).join(format!("{command}-{stamp}"))
        }
    };
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::config(format!("cannot create run dir {}: {e}", dir.display())))?;
    Ok(dir)
}

/// key=value echo of every resolved setting, sorted, reloadable.
pub fn write_config_echo(dir: &Path, entries: &[(String, String)]) -> CliResult<()> {
    let mut sorted = entries.to_vec();
    sorted.sort();
    let mut text = String::new();
    for (k, v) in sorted {
        let _ = writeln!(text, "{k}={v}");
    }
    fs::write(dir.join("config.txt"), text)
        .map_err(|e| CliError::config(format!("cannot write config echo: {e}")))?;
    Ok(())
}

/// Encoder widths for an input size: ceil-halvings down to a 4x4 bottleneck,
/// doubling from 8. 224 keeps the published [32..1024] ramp.
pub fn derive_widths(image_size: usize) -> Vec<usize> {
    if image_size == 224 {
        return vec![32, 64, 128, 256, 512, 1024];
    }
    let mut stages = 0;
    let mut extent = image_size;
    while extent > 4 {
        extent = extent.div_ceil(2);
        stages += 1;
    }
    (0..stages.max(1)).map(|i| (8usize << i).min(1024)).collect()
}

pub fn parse_widths(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::config(format!("--widths: bad extent {t:?}")))
        })
        .collect()
}

/// Resolves the model geometry from the flags. `label_count` overrides the
/// class count when the dataset dictates it.
pub fn resolve_model_config(
    model: &ModelArgs,
    data: &DataArgs,
    seed: u64,
    label_count: Option<usize>,
) -> CliResult<ModelConfig> {
    if !(0.0..1.0).contains(&model.dropout) {
        return Err(CliError::config(format!(
            "--dropout must lie in [0, 1), got {}",
            model.dropout
        )));
    }
    let image_size = model
        .image_size
        .unwrap_or(if data.synthetic { 64 } else { 224 });
    let widths = match &model.widths {
        Some(text) => parse_widths(text)?,
        None => derive_widths(image_size),
    };
    let decoder_width = *widths.last().unwrap_or(&1024);
    let num_classes = label_count.unwrap_or(if data.synthetic { data.classes } else { 22 });
    let config = ModelConfig {
        input_size: (image_size, image_size),
        encoder_widths: widths,
        decoder_width,
        num_classes,
        variant: Variant::parse(&model.variant)
            .ok_or_else(|| CliError::config(format!("--variant: unknown {:?}", model.variant)))?,
        dropout_rate: model.dropout,
        bn_order: BnOrder::parse(&model.bn_order)
            .ok_or_else(|| CliError::config(format!("--bn-order: unknown {:?}", model.bn_order)))?,
        seed,
        ..ModelConfig::default()
    };
    config.validate().map_err(CliError::from)?;
    Ok(config)
}

pub struct ResolvedData {
    pub records: Vec<DatasetRecord>,
    pub class_names: Vec<String>,
    /// Set when records need resizing onto the model input (directory data).
    pub needs_standardize: bool,
}

/// Loads --data or generates --synthetic records.
pub fn resolve_dataset(data: &DataArgs, seed: u64) -> CliResult<ResolvedData> {
    match &data.data {
        Some(dir) => {
            let (records, class_names) = load_dataset_dir(dir)?;
            Ok(ResolvedData {
                records,
                class_names,
                needs_standardize: true,
            })
        }
        None if data.synthetic => {
            if data.classes < 2 {
                return Err(CliError::config("--classes must be >= 2"));
            }
            let size = 64;
            let (records, _) = make_synthetic(data.classes, data.per_class, size, seed);
            let class_names = (0..data.classes).map(|c| format!("class{c}")).collect();
            Ok(ResolvedData {
                records,
                class_names,
                needs_standardize: false,
            })
        }
        None => Err(CliError::config(
            "either --data <DIR> or --synthetic is required",
        )),
    }
}

/// Synthetic records are generated at the requested size; regenerate when
/// --image-size disagrees with the default 64.
pub fn resolve_dataset_sized(
    data: &DataArgs,
    seed: u64,
    image_size: usize,
) -> CliResult<ResolvedData> {
    if data.synthetic {
        if data.classes < 2 {
            return Err(CliError::config("--classes must be >= 2"));
        }
        if image_size < 16 {
            return Err(CliError::config("--image-size must be >= 16 for --synthetic"));
        }
        let (records, _) = make_synthetic(data.classes, data.per_class, image_size, seed);
        let class_names = (0..data.classes).map(|c| format!("class{c}")).collect();
        return Ok(ResolvedData {
            records,
            class_names,
            needs_standardize: false,
        });
    }
    resolve_dataset(data, seed)
}

/// Deterministic resize-and-center-crop onto the model input size.
pub fn standardize(records: &[DatasetRecord], crop: usize) -> CliResult<Vec<DatasetRecord>> {
    let cfg = AugmentConfig::for_crop(crop);
    let params = AugmentParams::identity(&cfg);
    records
        .iter()
        .map(|rec| augment_with(rec, &params, &cfg).map_err(CliError::from))
        .collect()
}

pub fn write_manifest(dir: &Path, class_names: &[String]) -> CliResult<()> {
    fs::write(dir.join("manifest.txt"), manifest_bytes(class_names))
        .map_err(|e| CliError::config(format!("cannot write manifest: {e}")))?;
    Ok(())
}

pub fn workers_or_default(workers: Option<usize>) -> usize {
    workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}
