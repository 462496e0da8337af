use clap_core::checkpoint::load_checkpoint;
use clap_core::model::{Model, ModelConfig, REFERENCE_GFLOPS, REFERENCE_TOTAL_PARAMS};

use crate::args::InspectArgs;
use crate::common::{resolve_model_config, CliResult};

pub fn run(args: &InspectArgs) -> CliResult<()> {
    let model: Model<f32> = match &args.checkpoint {
        Some(path) => load_checkpoint::<f32>(path)?.model,
        None => {
            let data = crate::args::DataArgs {
                data: None,
                synthetic: false,
                classes: args.classes,
                per_class: 0,
            };
            let mut config = resolve_model_config(&args.model, &data, 0, Some(args.classes))?;
            // inspect defaults to the published geometry
            if args.model.image_size.is_none() && args.model.widths.is_none() {
                config = ModelConfig {
                    num_classes: args.classes,
                    variant: config.variant,
                    dropout_rate: config.dropout_rate,
                    bn_order: config.bn_order,
                    ..ModelConfig::default()
                };
            }
            Model::build(config)?
        }
    };

    let (param_rows, trainable, non_trainable) = model.count_params();
    let (flop_rows, macs, flops) = model.count_flops();
    let total = trainable + non_trainable;
    let gflops = flops as f64 / 1e9;

    if args.format == "csv" {
        println!("layer,trainable,non_trainable,macs,flops");
        for (p, f) in param_rows.iter().zip(&flop_rows) {
            println!("{},{},{},{},{}", p.layer, p.trainable, p.non_trainable, f.macs, f.flops);
        }
        println!("total,{trainable},{non_trainable},{macs},{flops}");
    } else {
        println!(
            "{:<10} {:>12} {:>14} {:>14} {:>16}",
            "layer", "trainable", "non-trainable", "macs", "flops"
        );
        for (p, f) in param_rows.iter().zip(&flop_rows) {
            println!(
                "{:<10} {:>12} {:>14} {:>14} {:>16}",
                p.layer, p.trainable, p.non_trainable, f.macs, f.flops
            );
        }
        println!(
            "{:<10} {:>12} {:>14} {:>14} {:>16}",
            "total", trainable, non_trainable, macs, flops
        );
    }
    println!(
        "params: {} total ({} trainable + {} running stats) | paper: {}",
        group(total),
        group(trainable),
        group(non_trainable),
        group(REFERENCE_TOTAL_PARAMS)
    );
    println!(
        "compute: {gflops:.4} GFLOPs per image (2 x {} MACs) | paper: {REFERENCE_GFLOPS} GFLOPs",
        group(macs)
    );
    Ok(())
}

/// Thousands-separated rendering, e.g. 4991554 -> "4,991,554".
fn group(value: u64) -> String {
    let digits = value.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
