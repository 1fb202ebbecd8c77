use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lente_cli::{parse_config, run, Format, RunOptions, Subcommand, THREADS_ENV};

/// Kinetics of collective laser cooling of trapped Bose gases.
#[derive(Debug, Parser)]
#[command(name = "lente", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensembles.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let options = RunOptions { seed: cli.seed, out: cli.out, threads: cli.threads, format: Some(cli.format) };
    let result = parse_config(&cli.config).and_then(|config| run(cli.command, config, &options));
    match result {
        Ok(out) => {
            print!("{}", out.stdout);
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lente: {e}");
            ExitCode::FAILURE
        }
    }
}
