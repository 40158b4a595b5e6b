//! `cdcn` command line: kernel export, degradation and label synthesis,
//! training, benchmark evaluation, component dumps, and parameter counts.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or validation error,
//! 3 numerical failure during training, 4 artifact mismatch (bad or
//! incompatible checkpoint / kernel / report files).

mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cdcn", version, about = "Blind super-resolution via component decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a blur kernel and write it in the text format.
    Kernel(KernelArgs),
    /// Degrade an HR image into its LR counterpart.
    Degrade(DegradeArgs),
    /// Decompose an HR image into structure/detail/LR label images.
    Labels(LabelsArgs),
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Run a benchmark protocol and write a metric report.
    Eval(EvalArgs),
    /// Run a checkpoint over an LR image and dump its component estimates.
    Decompose(DecomposeArgs),
    /// Print the parameter count of a model configuration.
    Params(ParamsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelType {
    Iso,
    Aniso,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long = "type", value_enum)]
    kind: KernelType,
    /// Isotropic sigma in pixels (iso only).
    #[arg(long)]
    width: Option<f64>,
    /// Axis sigmas and rotation (aniso only).
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Multiplicative kernel noise level, at most 0.25 (aniso only).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Kernel side length (odd). Defaults: 21 iso, 11 aniso.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KernelSource {
    /// Kernel text file to reuse.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Or synthesize an isotropic Gaussian of this sigma.
    #[arg(long)]
    width: Option<f64>,
    /// Side length for a synthesized kernel (odd, default 21).
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long)]
    hr: PathBuf,
    #[arg(long)]
    scale: usize,
    #[command(flatten)]
    kernel: KernelSource,
    /// Output directory; defaults to the input image's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LabelsArgs {
    #[arg(long)]
    hr: PathBuf,
    #[arg(long)]
    scale: usize,
    #[command(flatten)]
    kernel: KernelSource,
    /// Output directory; defaults to the input image's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additionally write lossless 32-bit float arrays (_hr/_s/_d/_lr.f32).
    #[arg(long = "float-out")]
    float_out: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value config file (see configs/).
    #[arg(long)]
    config: PathBuf,
    /// Directory of HR training PNGs.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for checkpoints and the loss log.
    #[arg(long)]
    out: PathBuf,
    /// Override config keys, e.g. --set total_iters=100 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Resume from a checkpoint written by a previous run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    Gaussian8,
    Anisotropic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Bicubic,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Or a reference baseline instead of a model.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    #[arg(long, value_enum)]
    protocol: Protocol,
    #[arg(long)]
    scale: usize,
    /// Directory of HR benchmark PNGs.
    #[arg(long)]
    data: PathBuf,
    /// Report file to write.
    #[arg(long)]
    out: PathBuf,
    /// Kernel seeds for the anisotropic protocol (comma separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Parallel evaluation workers.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// LR input to restore.
    #[arg(long)]
    lr: Option<PathBuf>,
    /// Or an HR image to degrade first; ground-truth components are then
    /// written alongside the estimates.
    #[arg(long)]
    hr: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long, default_value_t = 5)]
    groups: usize,
    #[arg(long, default_value_t = 10)]
    blocks: usize,
    #[arg(long, default_value_t = 64)]
    channels: usize,
    #[arg(long)]
    scale: usize,
    #[arg(long, default_value = "full")]
    ablation: String,
    #[arg(long, default_value_t = 16)]
    ca_reduction: usize,
}

/// Error carrying the documented exit code.
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Kernel(args) => ops::kernel(args),
        Command::Degrade(args) => ops::degrade(args),
        Command::Labels(args) => ops::labels(args),
        Command::Train(args) => ops::train(args),
        Command::Eval(args) => ops::eval(args),
        Command::Decompose(args) => ops::decompose(args),
        Command::Params(args) => ops::params(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
