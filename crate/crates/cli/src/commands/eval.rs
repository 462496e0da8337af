use clap_core::checkpoint::load_checkpoint;
use clap_core::data::{split, SplitSpec};
use clap_core::metrics::{render_confusion, render_report, ReportStyle};
use clap_core::train::evaluate;

use crate::args::EvalArgs;
use crate::common::{
    resolve_run_dir, standardize, workers_or_default, write_config_echo, CliError, CliResult,
    ResolvedData,
};

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let checkpoint = load_checkpoint::<f32>(&args.checkpoint)?;
    let model = checkpoint.model;
    let (input, _) = model.config.input_size;

    let ResolvedData {
        records,
        class_names,
        needs_standardize,
    } = crate::common::resolve_dataset_sized(&args.data, args.seed, input)?;
    if class_names.len() != model.config.num_classes {
        return Err(CliError::config(format!(
            "dataset has {} classes but the checkpoint expects {}",
            class_names.len(),
            model.config.num_classes
        )));
    }
    // the held-out portion under the same split spec the trainer uses
    let spec = SplitSpec {
        fractions: (0.6, 0.2, 0.2),
        seed: args.seed,
    };
    let (_, _, test_set) = split(&records, &spec)?;
    let test_set = if needs_standardize {
        standardize(&test_set, input)?
    } else {
        test_set
    };

    let run_dir = resolve_run_dir(args.out.as_deref(), "eval")?;
    write_config_echo(
        &run_dir,
        &[
            ("command".into(), "eval".into()),
            ("checkpoint".into(), args.checkpoint.display().to_string()),
            ("seed".into(), args.seed.to_string()),
            ("records".into(), test_set.len().to_string()),
        ],
    )?;

    let exec = clap_core::parallel::Exec::new(workers_or_default(args.workers));
    let (loss, report) = evaluate(&model, &test_set, 32, exec)?;
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
    println!("loss {loss:.6}; artifacts in {}", run_dir.display());
    Ok(())
}
