//! `dvqa`: experiments, bound tables and networked parties for delegated
//! VQAs. Exit codes: 0 success, 1 Abort verdict, 2 usage error, 3 internal
//! error.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, Verdict};
use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "dvqa", version, about = "Simulation lab for verifiable delegated VQAs")]
struct Cli {
    /// JSON file with the same keys as the flags; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Three-arm gradient descent on a TFIM lattice.
    TfimVqe(Settings),
    /// Relative gradient error against trap detections for a grid of attacks.
    VerifyStep(Settings),
    /// Corruption budget, failure bounds and convergence quantities as JSON.
    Bounds(Settings),
    /// Exact TFIM ground energy.
    GroundEnergy(Settings),
    /// Run a referee over TCP.
    ServeReferee(Settings),
    /// Run a server over TCP.
    ServeServer(Settings),
}

fn load(config: Option<&PathBuf>, flags: Settings) -> Result<Settings, Failure> {
    let Some(path) = config else { return Ok(flags) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let file = Settings::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(file.overlay(flags))
}

fn run(cli: Cli) -> Result<Verdict, Failure> {
    let config = cli.config.as_ref();
    match cli.command {
        Command::TfimVqe(f) => commands::tfim_vqe(&load(config, f)?),
        Command::VerifyStep(f) => commands::verify_step(&load(config, f)?),
        Command::Bounds(f) => commands::bounds(&load(config, f)?),
        Command::GroundEnergy(f) => commands::ground_energy(&load(config, f)?),
        Command::ServeReferee(f) => commands::serve_referee_cmd(&load(config, f)?),
        Command::ServeServer(f) => commands::serve_server_cmd(&load(config, f)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Verdict::Accept) => ExitCode::SUCCESS,
        Ok(Verdict::Abort) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
