use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod eval;
mod generate;
mod system;
mod table;
mod train;

use config::ExperimentConfig;

/// Raised for anything wrong with the configuration or its inputs; the
/// process then exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "eharq",
    version,
    about = "Early-HARQ feedback prediction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Records per split for `gen`, simulated slots for `system`.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Adds simulator columns to `system`.
    #[arg(long, global = true)]
    simulate: bool,
    /// Checks autoencoder gradients before training.
    #[arg(long, global = true)]
    gradcheck: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/validation/test datasets.
    Gen,
    /// Fit a classifier.
    Train,
    /// Score a test set and write curves.
    Eval,
    /// Packet failure sweeps and total scores.
    System,
}

pub struct Flags {
    pub n: Option<usize>,
    pub simulate: bool,
    pub gradcheck: bool,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    std::fs::create_dir_all(&cfg.out)?;
    let flags = Flags {
        n: cli.n,
        simulate: cli.simulate,
        gradcheck: cli.gradcheck,
    };
    match cli.command {
        Command::Gen => generate::run(&cfg, &flags),
        Command::Train => train::run(&cfg, &flags),
        Command::Eval => eval::run(&cfg, &flags),
        Command::System => system::run(&cfg, &flags),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
