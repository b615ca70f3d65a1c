//! `gcf`: synthesize data, train, evaluate and inspect gated clip fusion heads.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcf_core::GcfMode;

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "gcf", version, about = "Gated clip fusion over precomputed clip descriptors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic dataset and its manifest.
    Synth(SynthArgs),
    /// Train a fusion head or the per-clip baseline classifier.
    Train(TrainArgs),
    /// Compare central, dense and fusion top-1 accuracy on one split.
    Eval(EvalArgs),
    /// Per-video predicted class and probabilities.
    Predict(PredictArgs),
    /// Per-video relevant clips from the gate, or Grad-CAM maps from a feature volume.
    Localize(LocalizeArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Analytic and measured parameter and multiply-accumulate counts.
    Count(CountArgs),
    /// Dump the header of a descriptor file, checkpoint or manifest.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    run_length: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    distractor_probability: Option<f64>,
    #[arg(long)]
    pure_noise: bool,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    val_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModelArg {
    Gcf,
    ClipClassifier,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint, history and run record.
    #[arg(long)]
    out: PathBuf,
    /// TOML experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    mode: Option<GcfMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    fused_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    gate_hidden: Option<usize>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fusion head checkpoint.
    #[arg(long)]
    gcf: Option<PathBuf>,
    /// Clip classifier checkpoint for the central and dense rows.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Average the middle k clips for the central row.
    #[arg(long, default_value_t = 1)]
    central_k: usize,
    /// Emit one JSON record per row instead of a table.
    #[arg(long)]
    json: bool,
    /// Exit with status 3 unless the fusion row is at least the dense row.
    #[arg(long)]
    gate: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum StrategyArg {
    Central,
    Dense,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Descriptor file or pack.
    #[arg(long, conflicts_with = "data")]
    input: Option<PathBuf>,
    /// Dataset directory or manifest (with --split).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Checkpoint of either model kind.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Strategy for clip classifier checkpoints.
    #[arg(long, value_enum, default_value = "dense")]
    strategy: StrategyArg,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["model", "volume"]))]
struct LocalizeArgs {
    /// Fusion head checkpoint; gate values are thresholded per clip.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// JSON feature volume with gradients; writes Grad-CAM maps.
    #[arg(long, conflicts_with = "model")]
    volume: Option<PathBuf>,
    /// Output file for Grad-CAM maps.
    #[arg(long, requires = "volume")]
    out: Option<PathBuf>,
    /// Resize every map to HEIGHTxWIDTH.
    #[arg(long, requires = "volume")]
    resize: Option<String>,
}

#[derive(Args, Debug)]
struct ShapeArgs {
    /// TOML experiment config to take the model shape from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    fused_dim: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    gate_hidden: Option<usize>,
    #[arg(long)]
    mode: Option<GcfMode>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Run the full grid of small shapes instead of one config.
    #[arg(long)]
    grid: bool,
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CountArgs {
    #[command(flatten)]
    shape: ShapeArgs,
}

#[derive(Args, Debug)]
struct InspectArgs {
    file: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Localize(a) => commands::localize(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Count(a) => commands::count(a),
        Command::Inspect(a) => commands::inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            return Failure::usage(first).report();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
