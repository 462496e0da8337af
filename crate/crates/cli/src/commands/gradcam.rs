use clap_core::checkpoint::load_checkpoint;
use clap_core::data::encode_ppm;
use clap_core::data::synthetic::make_synthetic_offset;
use clap_core::model::{argmax, grad_cam, heatmap_argmax};
use clap_core::tensor::Tensor;

use crate::args::GradcamArgs;
use crate::common::{
    resolve_run_dir, standardize, workers_or_default, write_config_echo, CliError, CliResult,
};

pub fn run(args: &GradcamArgs) -> CliResult<()> {
    let checkpoint = load_checkpoint::<f32>(&args.checkpoint)?;
    let model = checkpoint.model;
    let (input, _) = model.config.input_size;
    let k = model.config.num_classes;
    let layer = args
        .layer
        .clone()
        .unwrap_or_else(|| model.default_cam_layer());

    // held-out synthetic records come with their blob boxes, so the run can
    // report the localization hit rate
    let (records, boxes) = if args.data.synthetic {
        if args.data.classes != k {
            return Err(CliError::config(format!(
                "--classes {} does not match the checkpoint's {k}",
                args.data.classes
            )));
        }
        let per_class = args.count.div_ceil(k);
        let (records, boxes) =
            make_synthetic_offset(k, per_class, input, args.seed, args.data.per_class);
        (records, Some(boxes))
    } else {
        let resolved = crate::common::resolve_dataset(&args.data, args.seed)?;
        if resolved.class_names.len() != k {
            return Err(CliError::config(format!(
                "dataset has {} classes but the checkpoint expects {k}",
                resolved.class_names.len()
            )));
        }
        (standardize(&resolved.records, input)?, None)
    };
    let count = args.count.min(records.len());

    let run_dir = resolve_run_dir(args.out.as_deref(), "gradcam")?;
    write_config_echo(
        &run_dir,
        &[
            ("command".into(), "gradcam".into()),
            ("checkpoint".into(), args.checkpoint.display().to_string()),
            ("layer".into(), layer.clone()),
            ("count".into(), count.to_string()),
            ("seed".into(), args.seed.to_string()),
        ],
    )?;

    let exec = clap_core::parallel::Exec::new(workers_or_default(args.workers));
    let mut hits = 0usize;
    for (i, rec) in records.iter().take(count).enumerate() {
        let image = rec
            .image
            .clone()
            .reshape(vec![1, 3, input, input])
            .map_err(CliError::from)?;
        let probs = model.predict(&image, exec)?;
        let predicted = argmax(probs.data());
        let map = grad_cam(&model, &image, rec.label, &layer, exec)?;
        let (x, y) = heatmap_argmax(&map);
        let hit = boxes
            .as_ref()
            .map(|b| b[i].contains(x, y))
            .unwrap_or(false);
        if hit {
            hits += 1;
        }
        let overlay = overlay_heatmap(&rec.image, &map);
        let path = run_dir.join(format!(
            "gradcam_{i:03}_true{}_pred{predicted}.ppm",
            rec.label
        ));
        std::fs::write(&path, encode_ppm(&overlay)?)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
    }
    println!("wrote {count} heatmap overlays to {}", run_dir.display());
    if boxes.is_some() {
        println!(
            "localization: heatmap peak inside the blob box for {hits}/{count} images"
        );
    }
    Ok(())
}

/// Blends the grayscale image with a blue-to-red heat ramp.
fn overlay_heatmap(image: &Tensor<f32>, map: &Tensor<f32>) -> Tensor<f32> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let plane = h * w;
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let heat = map.data()[y * w + x];
            let gray = (image.data()[y * w + x]
                + image.data()[plane + y * w + x]
                + image.data()[2 * plane + y * w + x])
                / 3.0;
            let color = [heat, 0.15 * heat, 1.0 - heat];
            for c in 0..3 {
                out.data_mut()[c * plane + y * w + x] =
                    (0.5 * gray + 0.5 * color[c]).clamp(0.0, 1.0);
            }
        }
    }
    out
}
