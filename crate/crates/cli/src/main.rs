mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "synthcurate",
    version,
    about = "Uncertainty-aware curation of synthetic training embeddings"
)]
struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// INI-style config file (`key = value`); flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (file, or directory where noted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a prompt manifest from a description bank.
    GenPrompts(GenPromptsArgs),
    /// Score synthetic samples by similarity-profile entropy.
    Score(ScoreArgs),
    /// Turn an uncertainty report into a curation plan.
    Curate(CurateArgs),
    /// Train a linear probe under a curation plan.
    Train(TrainArgs),
    /// Evaluate a probe on the real-test split.
    Eval(EvalArgs),
    /// Davies-Bouldin scores and pairwise MMD between datasets.
    Diagnose(DiagnoseArgs),
    /// 2-D PCA projection as CSV and optional SVG scatter.
    Project(ProjectArgs),
    /// Generate a seeded Gaussian-mixture scenario.
    Simulate(SimulateArgs),
    /// Seeded end-to-end experiment with a summary table.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct GenPromptsArgs {
    /// Description bank JSON (file provider).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Remote description endpoint; token from SYNTHCURATE_PROVIDER_TOKEN.
    #[arg(long, conflicts_with = "bank")]
    endpoint: Option<String>,
    /// Class names, one per line (defaults to bank order).
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Basic, Env, Cha or IE.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    per_class_count: Option<usize>,
    /// Composition template with {action}, {character}, {environment}.
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    template_version: Option<String>,
    #[arg(long)]
    provider_timeout_secs: Option<u64>,
    /// Also write the fetched/validated bank here.
    #[arg(long)]
    save_bank: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    logit_scale: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Args, Debug)]
struct CurateArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Uncertainty report CSV (needed by UW, UF and UL).
    #[arg(long)]
    report: Option<PathBuf>,
    /// NONE, LS, UW, UF or UL.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    drop_fraction: Option<f64>,
    #[arg(long)]
    ls_epsilon: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Args, Debug, Clone, Copy, Default)]
struct TrainFlags {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Curation plan CSV; without it every sample is one-hot with weight 1.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Start from this probe checkpoint instead of zeros.
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    probe: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Datasets to compare, as `name=path` or `path`.
    #[arg(long = "dataset", num_args = 1..)]
    datasets: Vec<String>,
    /// Comma-separated kernels: lin, rbf, rbf:<sigma>, poly.
    #[arg(long)]
    kernels: Option<String>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Also write an SVG scatter here.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// real-like, ie-like or basic-like.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    intra_std: Option<f64>,
    #[arg(long)]
    inter_sep: Option<f64>,
    #[arg(long)]
    corrupt_fraction: Option<f64>,
    /// label_flip or outlier_shift.
    #[arg(long)]
    corrupt_mode: Option<String>,
    /// synthetic, real-train or real-test.
    #[arg(long)]
    split: Option<String>,
    /// Where to list corrupted ids (default: `<out>.corrupted.json`).
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ExperimentPreset {
    /// Every curation strategy on a corrupted scenario.
    Table7,
    /// Synthetic pretraining + 2-shot fine-tuning vs 2-shot from scratch.
    Pretrain,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    preset: ExperimentPreset,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    logit_scale: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    ls_epsilon: Option<f64>,
    #[arg(long)]
    drop_fraction: Option<f64>,
    #[command(flatten)]
    train: TrainFlags,
    /// Per-seed results as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_runtime() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> synthcurate::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.paths.out = Some(out);
    }
    commands::dispatch(cli.command, cfg)
}
