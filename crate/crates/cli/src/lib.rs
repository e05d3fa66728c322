//! Operator surface: extract | synth-corpus | train | generate | eval |
//! sweep-blocks | describe. Every subcommand is deterministic given --seed
//! and its inputs; all emitted CSVs carry a header row.

pub mod args;
pub mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use foleygen_core::error::Result;

#[derive(Debug, Parser)]
#[command(name = "foleygen", version, about = "Temporal-event-guided Foley sound synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Base seed for all randomness
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Key-value config file supplying defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory or file (meaning depends on the subcommand)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the RMS temporal event feature from a WAV file
    Extract(commands::extract::ExtractArgs),
    /// Generate a synthetic labeled corpus of event-structured clips
    SynthCorpus(commands::synth::SynthCorpusArgs),
    /// Train a diffusion model on a labeled corpus
    Train(commands::train::TrainCmdArgs),
    /// Sample audio from a trained checkpoint under a temporal condition
    Generate(commands::generate::GenerateArgs),
    /// Evaluate generated audio against references (event-L1, FAD, IS)
    Eval(commands::eval::EvalArgs),
    /// Train and evaluate across several temporal block counts
    SweepBlocks(commands::sweep::SweepArgs),
    /// Print the architecture summary and parameter counts
    Describe(commands::describe::DescribeArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    let file_cfg = args::KvConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Extract(a) => commands::extract::run(&a, &file_cfg, &cli.out),
        Command::SynthCorpus(a) => commands::synth::run(&a, &file_cfg, cli.seed, &cli.out),
        Command::Train(a) => commands::train::run(&a, &file_cfg, cli.seed, &cli.out),
        Command::Generate(a) => commands::generate::run(&a, &file_cfg, cli.seed, &cli.out),
        Command::Eval(a) => commands::eval::run(&a, &file_cfg, &cli.out),
        Command::SweepBlocks(a) => commands::sweep::run(&a, &file_cfg, cli.seed, &cli.out),
        Command::Describe(a) => commands::describe::run(&a, &file_cfg),
    }
}
