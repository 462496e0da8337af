use std::fs::File;
use std::io::Write as _;

use clap_core::checkpoint::save_checkpoint;
use clap_core::data::augment::AugmentConfig;
use clap_core::data::{split, SplitSpec};
use clap_core::metrics::{render_confusion, render_report, ReportStyle};
use clap_core::model::Model;
use clap_core::train::{evaluate, train, TrainConfig};

use crate::args::TrainArgs;
use crate::common::{
    resolve_model_config, resolve_run_dir, standardize, workers_or_default, write_config_echo,
    write_manifest, CliError, CliResult, ResolvedData, EXIT_DIVERGENCE,
};

pub fn run(args: &TrainArgs) -> CliResult<()> {
    if args.lr < 0.0 || !args.lr.is_finite() {
        return Err(CliError::config(format!(
            "invalid --lr: must be >= 0, got {}",
            args.lr
        )));
    }
    if args.batch == 0 {
        return Err(CliError::config("invalid --batch: must be >= 1"));
    }
    if args.epochs == 0 {
        return Err(CliError::config("invalid --epochs: must be >= 1"));
    }

    let ResolvedData {
        records,
        class_names,
        needs_standardize,
    } = crate::common::resolve_dataset_sized(
        &args.data,
        args.seed,
        args.model.image_size.unwrap_or(64),
    )?;
    let config = resolve_model_config(
        &args.model,
        &args.data,
        args.seed,
        Some(class_names.len()),
    )?;
    let (h, _) = config.input_size;

    let spec = SplitSpec {
        fractions: (0.6, 0.2, 0.2),
        seed: args.seed,
    };
    let (train_set, val_set, test_set) = split(&records, &spec)?;
    let (val_set, test_set) = if needs_standardize {
        (standardize(&val_set, h)?, standardize(&test_set, h)?)
    } else {
        (val_set, test_set)
    };

    let run_dir = resolve_run_dir(args.out.as_deref(), "train")?;
    write_manifest(&run_dir, &class_names)?;

    let workers = workers_or_default(args.workers);
    let augment = needs_standardize.then(|| AugmentConfig::for_crop(h));
    let train_cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch,
        momentum: args.momentum,
        seed: args.seed,
        workers,
        augment,
        ..TrainConfig::default()
    };
    train_cfg.validate()?;

    let mut echo: Vec<(String, String)> = vec![
        ("command".into(), "train".into()),
        ("data".into(), match &args.data.data {
            Some(p) => p.display().to_string(),
            None => "synthetic".into(),
        }),
        ("classes".into(), class_names.len().to_string()),
        ("image_size".into(), h.to_string()),
        (
            "widths".into(),
            config
                .encoder_widths
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("variant".into(), config.variant.name().into()),
        ("dropout".into(), config.dropout_rate.to_string()),
        ("bn_order".into(), config.bn_order.name().into()),
        ("epochs".into(), args.epochs.to_string()),
        ("lr".into(), args.lr.to_string()),
        ("batch".into(), args.batch.to_string()),
        ("momentum".into(), args.momentum.to_string()),
        ("seed".into(), args.seed.to_string()),
        ("workers".into(), workers.to_string()),
        ("split".into(), "0.6,0.2,0.2".into()),
    ];
    if args.data.synthetic {
        echo.push(("per_class".into(), args.data.per_class.to_string()));
    }
    write_config_echo(&run_dir, &echo)?;

    let mut model: Model<f32> = Model::build(config)?;
    let history_path = run_dir.join("history.log");
    let mut history_file = File::create(&history_path)
        .map_err(|e| CliError::config(format!("cannot create history log: {e}")))?;

    eprintln!(
        "training {} records ({} val, {} test) for {} epochs into {}",
        train_set.len(),
        val_set.len(),
        test_set.len(),
        args.epochs,
        run_dir.display()
    );
    let checkpoint_every = args.checkpoint_every;
    let run_dir_for_sink = run_dir.clone();
    let names_for_sink = class_names.clone();
    let mut sink_error: Option<CliError> = None;
    let outcome = train(
        &mut model,
        &train_set,
        &val_set,
        &train_cfg,
        None,
        &mut |record, current, opt| {
            let line = record.log_line();
            eprintln!("{line}");
            if sink_error.is_none() {
                if let Err(e) = writeln!(history_file, "{line}") {
                    sink_error = Some(CliError::config(format!("cannot write history: {e}")));
                }
            }
            if let Some(every) = checkpoint_every {
                if every > 0 && record.epoch % every == 0 {
                    let path = run_dir_for_sink.join(format!("epoch-{:03}.ckpt", record.epoch));
                    if let Err(e) = save_checkpoint(&path, current, &names_for_sink, Some(opt)) {
                        sink_error = Some(CliError::from(e));
                    }
                }
            }
        },
    );
    if let Some(e) = sink_error {
        return Err(e);
    }
    let outcome = match outcome {
        Ok(outcome) => outcome,
        Err(e @ clap_core::error::Error::DivergenceDetected { .. }) => {
            // keep the last good model so the run is resumable
            save_checkpoint(&run_dir.join("final.ckpt"), &model, &class_names, None)?;
            return Err(CliError {
                code: EXIT_DIVERGENCE,
                message: e.to_string(),
            });
        }
        Err(e) => return Err(e.into()),
    };

    save_checkpoint(
        &run_dir.join("best.ckpt"),
        &outcome.best_model,
        &class_names,
        None,
    )?;
    save_checkpoint(
        &run_dir.join("final.ckpt"),
        &model,
        &class_names,
        Some(&outcome.final_opt),
    )?;

    // final report on the held-out test split (falls back to val when the
    // split spec leaves no test records)
    let report_set = if test_set.is_empty() { &val_set } else { &test_set };
    let exec = clap_core::parallel::Exec::new(workers);
    let (test_loss, report) = evaluate(&outcome.best_model, report_set, args.batch, exec)?;
    std::fs::write(
        run_dir.join("report.txt"),
        render_report(&report, &class_names, ReportStyle::Text)?,
    )
    .map_err(|e| CliError::config(format!("cannot write report: {e}")))?;
    std::fs::write(
        run_dir.join("report.csv"),
        render_report(&report, &class_names, ReportStyle::Csv)?,
    )
    .map_err(|e| CliError::config(format!("cannot write report: {e}")))?;
    std::fs::write(
        run_dir.join("confusion.csv"),
        render_confusion(&report, &class_names),
    )
    .map_err(|e| CliError::config(format!("cannot write confusion: {e}")))?;

    let style = if args.format == "csv" {
        ReportStyle::Csv
    } else {
        ReportStyle::Text
    };
    print!("{}", String::from_utf8_lossy(&render_report(&report, &class_names, style)?));
    println!(
        "best epoch {} (val acc {:.4}); test loss {test_loss:.6}; artifacts in {}",
        outcome.best_epoch,
        outcome.best_val_acc,
        run_dir.display()
    );
    Ok(())
}
