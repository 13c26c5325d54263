//! `csso`: simulate click data, train the re-ranker, evaluate it and run the
//! MMR baseline from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "csso", version, about = "Slate re-ranking under distributional criteria")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Weight of nDCG against GAP in the reward.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    /// MMR trade-off; for `sweep-mmr`, evaluates this value only.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,

    /// Slate length.
    #[arg(long, global = true)]
    pub k: Option<usize>,

    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,

    /// Trains without the remaining-deficit input to the decoder.
    #[arg(long = "no-condition-info", global = true)]
    pub no_condition_info: bool,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Rl,
    Sl,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulates clicks on raw LETOR splits (or built-in synthetic data when
    /// no raw paths are configured) and writes augmented splits, criteria
    /// and a ready-to-use config to --out.
    Simulate,
    /// Trains a model and writes the checkpoint and training log.
    Train,
    /// Scores a checkpoint and the score order on a split.
    Evaluate(ModelArgs),
    /// Writes the greedy slate of every query in a split.
    Rerank(ModelArgs),
    /// Evaluates MMR over the configured lambda grid.
    SweepMmr(SplitArg),
    /// Checks the training gradients numerically.
    GradCheck,
}

#[derive(Debug, clap::Args)]
pub struct ModelArgs {
    /// Defaults to model.ckpt in the configured checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArg,
}

#[derive(Debug, clap::Args)]
pub struct SplitArg {
    #[arg(long, default_value = "test", value_parser = ["train", "valid", "test"])]
    pub split: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
