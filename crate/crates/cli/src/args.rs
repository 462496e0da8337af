use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "clap",
    version,
    about = "Separable-convolution autoencoder classifier: train, eval, gradcam, inspect, bench"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model and write history, checkpoints, and the test report
    Train(TrainArgs),
    /// Evaluate a checkpoint and write the metric report
    Eval(EvalArgs),
    /// Write class-activation heatmap overlays for a checkpoint
    Gradcam(GradcamArgs),
    /// Print the per-layer parameter and FLOP table with reference figures
    Inspect(InspectArgs),
    /// Measure per-image forward latency (reported, never asserted)
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Dataset directory (one subdirectory per class, .ppm / .rt files)
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic")]
    pub data: Option<std::path::PathBuf>,
    /// Use the generated blob dataset instead of --data
    #[arg(long)]
    pub synthetic: bool,
    /// Synthetic classes
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Synthetic records per class
    #[arg(long, default_value_t = 250)]
    pub per_class: usize,
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    /// Input resolution; defaults to 224 for --data and 64 for --synthetic
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Encoder widths, comma separated; derived from the image size when absent
    #[arg(long, value_name = "W1,W2,..")]
    pub widths: Option<String>,
    /// Architecture variant
    #[arg(long, default_value = "full", value_parser = ["encoder_only", "decoder_i", "full"])]
    pub variant: String,
    /// Dropout rate in [0, 1)
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    /// Activation/normalization order inside each block
    #[arg(long, default_value = "literal", value_parser = ["literal", "conventional"])]
    pub bn_order: String,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    /// Learning rate (>= 0)
    #[arg(long, default_value_t = 0.008, allow_hyphen_values = true)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.9, allow_hyphen_values = true)]
    pub momentum: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (results are identical for any count)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run directory; defaults to $CLAP_OUT_DIR/train-<timestamp>
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Also write epoch-NNN.ckpt every N epochs
    #[arg(long, value_name = "N")]
    pub checkpoint_every: Option<usize>,
    #[arg(long, default_value = "text", value_parser = ["text", "csv"])]
    pub format: String,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: std::path::PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    #[arg(long, default_value = "text", value_parser = ["text", "csv"])]
    pub format: String,
}

#[derive(Args)]
pub struct GradcamArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: std::path::PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Target stage name (e.g. enc3); defaults to the last encoder stage
    #[arg(long)]
    pub layer: Option<String>,
    /// Number of images to explain
    #[arg(long, default_value_t = 12)]
    pub count: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Args)]
pub struct InspectArgs {
    /// Checkpoint to describe; otherwise the flags below define the config
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 22)]
    pub classes: usize,
    #[arg(long, default_value = "text", value_parser = ["text", "csv"])]
    pub format: String,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 22)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
}
