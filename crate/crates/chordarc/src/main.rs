//! Command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use chordarc::cli::{CliError, Command, ConfigError, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chordarc", version, about = "Harmonic approximation of Hölder data on chord-arc curves")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Level range such as `3..6`.
    #[arg(long, global = true)]
    levels: Option<String>,
    #[arg(long = "n-max", global = true)]
    n_max: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Certify the pseudoharmonic extension on random off-curve probes.
    Extend,
    /// Build the harmonic approximants and their correction charges.
    Approximate,
    /// Build the approximants and run the scaling and harmonicity certificates.
    Certify,
    /// Tabulate the second-difference counterexample.
    Counterexample,
}

fn config(args: &Args) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let flags = [("n-max", "n_max", &args.n_max), ("levels", "levels", &args.levels), ("out", "out", &args.out), ("seed", "seed", &args.seed)];
    for (flag, key, value) in flags {
        if let Some(v) = value {
            cfg.apply_flag(flag, key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Cmd::Extend => Command::Extend,
        Cmd::Approximate => Command::Approximate,
        Cmd::Certify => Command::Certify,
        Cmd::Counterexample => Command::Counterexample,
    };
    let result = config(&args).map_err(CliError::from).and_then(|cfg| chordarc::cli::run(&cfg, command));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary_text());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
