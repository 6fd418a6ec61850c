//! `ngramlm`: train, evaluate and inspect word-level LSTM language models
//! with character n-gram word vectors.

mod build_vocab;
mod checkpoint;
mod config;
mod error;
mod eval;
mod export;
mod inspect;
mod output;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig, CONFIG_HELP};
use crate::error::{CliError, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(
    name = "ngramlm",
    version,
    about = "Word-level LSTM language models with character n-gram word vectors"
)]
struct Cli {
    /// More log output (-v debug, -vv trace); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the vocabulary and character n-gram table of a training file.
    BuildVocab(build_vocab::BuildVocabArgs),
    /// Train a model; writes a checkpoint, JSON-lines metrics and a summary.
    #[command(after_long_help = CONFIG_HELP)]
    Train {
        /// JSON run configuration (see --help for keys).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Box<Overrides>,
    },
    /// Perplexity of a checkpoint on a text, optionally split by word frequency.
    Eval(eval::EvalArgs),
    /// Show a word's n-grams, attention weights and nearest neighbours.
    Inspect(inspect::InspectArgs),
    /// Write embeddings as text, one word per line.
    Export(export::ExportArgs),
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::BuildVocab(args) => build_vocab::run(args),
        Command::Train { config, overrides } => {
            train::run(&RunConfig::load(config.as_deref(), overrides)?)
        }
        Command::Eval(args) => eval::run(args),
        Command::Inspect(args) => inspect::run(args),
        Command::Export(args) => export::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.use_stderr() {
                true => ExitCode::from(EXIT_CONFIG),
                false => ExitCode::SUCCESS,
            };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
