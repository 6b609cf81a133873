//! `dialsat`: generate corpora, extract features, train and evaluate
//! user-satisfaction models.
//!
//! Log verbosity follows `DIALSAT_LOG` (`error`, `warn`, `info`, `debug`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dialsat_core::pipeline::{self, CommandOutput, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "dialsat", version, about = "Turn- and dialogue-level user satisfaction estimation")]
struct Cli {
    /// JSON run configuration; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus to <out>/corpus.jsonl.
    Generate,
    /// Split a corpus into train/val/test at dialogue granularity.
    Split,
    /// Fit feature statistics on train and export feature tables.
    Features,
    /// Train the configured model with early stopping on val.
    Train,
    /// Bootstrap evaluation on the test split; the first model is compared
    /// with the others.
    Evaluate {
        /// Model directories (default: <out>/model).
        #[arg(long = "model")]
        models: Vec<PathBuf>,
    },
    /// Write per-turn and per-dialogue predictions.
    Score {
        /// Corpus to score (default: the test split).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train every combination of the configured grid.
    Gridsearch,
    /// PMI tables, slot-value coverage, attention reports, noise ratio.
    Analyze,
    /// Finite-difference gradient check of every variant.
    Gradcheck,
}

fn run(cli: Cli) -> Result<CommandOutput, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.paths.out = o;
    }
    match cli.command {
        Command::Generate => pipeline::generate(&cfg),
        Command::Split => pipeline::split(&cfg),
        Command::Features => pipeline::features(&cfg),
        Command::Train => pipeline::train(&cfg),
        Command::Evaluate { models } => pipeline::evaluate(&cfg, &models),
        Command::Score { input } => pipeline::score(&cfg, input.as_deref()),
        Command::Gridsearch => pipeline::gridsearch(&cfg),
        Command::Analyze => pipeline::analyze(&cfg),
        Command::Gradcheck => pipeline::gradcheck(cfg.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIALSAT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                log::info!("wrote {}", f.display());
            }
            if out.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
