//! `dg`: dataset generation, detector training and evaluation, and guided
//! sampling on the toy cross-attention generator.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, CommandFactory, Parser, Subcommand};
use dg_core::io::{Config, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "dg", version, about = "Detector Guidance on a toy cross-attention sampler")]
struct Cli {
    /// `key = value` configuration file. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write detector training samples, one file each.
    GenDataset(GenDatasetArgs),
    /// Train the detector on a sample directory.
    Train(TrainArgs),
    /// Score a detector per noise level, or score detection CSVs.
    Eval(EvalArgs),
    /// Sample with and without guidance and record the mixing metric.
    Run(RunArgs),
    /// Write attention maps of one scene at one timestep as images.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    /// Samples per noise level.
    #[arg(long)]
    pub count: Option<usize>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Where to write the trained weights.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-step loss as `step,loss` CSV.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, conflicts_with_all = ["detections", "truth"])]
    pub weights: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["detections", "truth"])]
    pub data: Option<PathBuf>,
    /// Detections CSV: `image,class,x,y,w,h,confidence`.
    #[arg(long, requires = "truth")]
    pub detections: Option<PathBuf>,
    /// Ground truth CSV: `image,class,x,y,w,h`.
    #[arg(long, requires = "detections")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Only the unguided baseline; no detector is needed.
    #[arg(long)]
    pub no_dg: bool,
    /// Seed of the first run; further runs use the following seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub cache_stride: Option<u64>,
    #[arg(long)]
    pub leak: Option<f32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip image dumps.
    #[arg(long)]
    pub no_images: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, default_value_t = 0)]
    pub t: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub leak: Option<f32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// File config, then the seed from the environment. Flags are applied by
/// each command.
fn load_config(path: Option<&PathBuf>) -> anyhow::Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => Config::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    cfg.apply_seed_override(env.as_deref())?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::GenDataset(a) => commands::gen_dataset(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::Run(a) => commands::run(cfg, a),
        Command::Export(a) => commands::export(cfg, a),
    }
}

/// Argument errors exit with code 2 and always show the usage line.
fn parse_args() -> Cli {
    match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            std::process::exit(2);
        }
        Err(e) => e.exit(),
    }
}

fn main() -> ExitCode {
    match dispatch(parse_args()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
