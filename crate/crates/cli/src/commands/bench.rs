use std::time::Instant;

use clap_core::checkpoint::load_checkpoint;
use clap_core::model::{Model, ModelConfig};
use clap_core::rng::Rng;
use clap_core::tensor::Tensor;

use crate::args::BenchArgs;
use crate::common::{resolve_model_config, workers_or_default, CliResult};

pub fn run(args: &BenchArgs) -> CliResult<()> {
    let model: Model<f32> = match &args.checkpoint {
        Some(path) => load_checkpoint::<f32>(path)?.model,
        None => {
            let data = crate::args::DataArgs {
                data: None,
                synthetic: false,
                classes: args.classes,
                per_class: 0,
            };
            let mut config =
                resolve_model_config(&args.model, &data, args.seed, Some(args.classes))?;
            if args.model.image_size.is_none() && args.model.widths.is_none() {
                config = ModelConfig {
                    num_classes: args.classes,
                    ..ModelConfig::default()
                };
            }
            Model::build(config)?
        }
    };
    let (h, w) = model.config.input_size;
    let mut rng = Rng::seed(args.seed);
    let image: Tensor<f32> =
        Tensor::from_fn(vec![1, model.config.in_channels, h, w], |_| {
            rng.uniform(0.0, 1.0) as f32
        });
    let exec = clap_core::parallel::Exec::new(workers_or_default(args.workers));

    for _ in 0..args.warmup {
        let _ = model.predict(&image, exec)?;
    }
    let mut times_ms = Vec::with_capacity(args.iters);
    for _ in 0..args.iters.max(1) {
        let t = Instant::now();
        let _ = model.predict(&image, exec)?;
        times_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean: f64 = times_ms.iter().sum::<f64>() / times_ms.len() as f64;
    let median = times_ms[times_ms.len() / 2];
    println!(
        "forward latency over {} iterations ({} warmup, {}x{} input, {} workers):",
        times_ms.len(),
        args.warmup,
        h,
        w,
        exec.workers
    );
    println!("mean {mean:.3} ms/image, median {median:.3} ms/image (measured, not asserted)");
    Ok(())
}
