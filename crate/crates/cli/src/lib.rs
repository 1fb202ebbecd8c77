//! Command-line driver: configuration, subcommand dispatch and artifact writing.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

pub use config::{parse_config, parse_str, RunConfig};
pub use output::{Artifact, Format, Provenance};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "LENTE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] lente::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Fc,
    Rates,
    Thermalize,
    Simulate,
    Thermo,
    Bdg,
    Estimate,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Fc => "fc",
            Subcommand::Rates => "rates",
            Subcommand::Thermalize => "thermalize",
            Subcommand::Simulate => "simulate",
            Subcommand::Thermo => "thermo",
            Subcommand::Bdg => "bdg",
            Subcommand::Estimate => "estimate",
        }
    }
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    /// Text meant for standard output.
    pub stdout: String,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs one subcommand and writes its artifacts.
pub fn run(command: Subcommand, mut config: RunConfig, options: &RunOptions) -> Result<RunOutput, CliError> {
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    config.validate()?;
    let threads = options.threads.unwrap_or_else(default_threads).max(1);
    let format = options.format.unwrap_or(Format::Csv);
    let mut stdout = String::new();
    let artifacts = match command {
        Subcommand::Fc => commands::fc(&config)?,
        Subcommand::Rates => commands::rates(&config)?,
        Subcommand::Thermalize => commands::thermalize(&config, threads)?,
        Subcommand::Simulate => commands::simulate(&config, threads)?,
        Subcommand::Thermo => commands::thermo(&config)?,
        Subcommand::Bdg => commands::bdg(&config)?,
        Subcommand::Estimate => {
            let report = commands::estimate_report(&config)?;
            stdout = commands::estimate_text(&report);
            commands::estimate_artifacts(&report)?
        }
    };
    let provenance = Provenance::new(command.name(), &config);
    let dir = options.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let files = output::write_all(&artifacts, &dir, &config.output.prefix, format, &provenance)?;
    Ok(RunOutput { files, stdout })
}
