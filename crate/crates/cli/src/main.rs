//! Command-line pipeline for identifying and categorizing self-admitted
//! technical debt in software-artifact text.

mod config;
mod run;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{AppConfig, Overrides};
use run::RunContext;

#[derive(Parser)]
#[command(
    name = "satd",
    version,
    about = "Identify and categorize self-admitted technical debt in software artifacts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; per-stage seeds derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Paraphrase backend.
    #[arg(long, global = true, value_parser = ["mock", "remote"])]
    client: Option<String>,

    /// Restrict the run to one artifact source (CC, IS, PS, CM).
    #[arg(long, global = true)]
    artifact: Option<String>,

    /// Output directory holding the manifest and all stage artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset file and write the canonical JSONL copy.
    Ingest {
        /// Dataset file (CSV or JSONL).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Dataset format when the extension is ambiguous.
        #[arg(long)]
        format: Option<String>,
    },
    /// Deduplicate and split the dataset into train/validation/test.
    Split,
    /// Generate paraphrases that balance the minority debt types.
    Augment {
        /// Augmentation input; defaults to the training split. Inputs
        /// containing held-out ids abort the run.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the binary identifier.
    TrainIdentify,
    /// Train the debt-type categorizer.
    TrainCategorize,
    /// Two-step evaluation on the test split; writes metrics.json and
    /// report.md.
    Evaluate,
    /// Extract indicative keywords per artifact source and debt type.
    Keywords {
        /// Original dataset file; defaults to the ingested copy.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run ingest, split, augment, both trainings, and evaluate in order.
    Pipeline {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
    },
    /// Reproduce augmentation-plan and entropy tables from the published
    /// benchmark class counts (no training).
    Tables,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Err(error) = real_main() {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    let mut overrides = Overrides {
        seed: cli.seed,
        client: cli.client.clone(),
        artifact: cli.artifact.clone(),
        out: cli.out.clone(),
        ..Overrides::default()
    };
    if let Command::Ingest { dataset, format } | Command::Pipeline { dataset, format } =
        &cli.command
    {
        overrides.dataset = dataset.clone();
        overrides.format = format.clone();
    }

    let config = AppConfig::load(cli.config.as_ref(), &overrides)?;
    let mut ctx = RunContext::open(config)?;
    match cli.command {
        Command::Ingest { .. } => run::ingest(&mut ctx),
        Command::Split => run::split(&mut ctx),
        Command::Augment { input } => run::augment(&mut ctx, input),
        Command::TrainIdentify => run::train_identify(&mut ctx),
        Command::TrainCategorize => run::train_categorize(&mut ctx),
        Command::Evaluate => run::evaluate(&mut ctx),
        Command::Keywords { input } => run::keywords(&mut ctx, input),
        Command::Pipeline { .. } => run::pipeline(&mut ctx),
        Command::Tables => run::tables(&mut ctx),
    }
}
