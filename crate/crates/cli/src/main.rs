//! `pagkit`: train model families, sweep robustness, run zero-shot transfer,
//! render gradient and attack figures, and score CAM localization.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pagkit", version, about = "Adversarial training and analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; receives checkpoints/, tables/, figures/ and logs/.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Name outputs by config digest instead of wall-clock time, so reruns
    /// overwrite byte-identical files.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model or a Natural + AT/N family.
    Train(Common),
    /// Adversarial accuracy of every checkpoint over an ε grid.
    EvalRobustness(Common),
    /// Source and target accuracy without fine-tuning.
    ZeroShot(Common),
    /// Gradient grids and large-ε attack galleries.
    Visualize(Common),
    /// CAM localization metrics over one or more thresholds.
    Wsol(Common),
    /// Write a dataset to the flat tensor cache format.
    Convert(Common),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    /// Finished, but some results are missing.
    Partial(String),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    /// Library errors caused by bad settings map to config errors.
    pub fn runtime(e: pagkit::Error) -> Self {
        match e {
            pagkit::Error::InvalidConfig(_)
            | pagkit::Error::UnknownArchitecture(_)
            | pagkit::Error::UnsupportedArchitecture(_)
            | pagkit::Error::ClassCountMismatch { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Partial(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
            CliError::Partial(m) => write!(f, "partial result: {m}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => commands::train(c),
        Command::EvalRobustness(c) => commands::eval_robustness(c),
        Command::ZeroShot(c) => commands::zero_shot(c),
        Command::Visualize(c) => commands::visualize(c),
        Command::Wsol(c) => commands::wsol(c),
        Command::Convert(c) => commands::convert(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
