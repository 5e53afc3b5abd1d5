use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use echolab_cli::config::{self, Diagnostic, Experiment, SEED_ENV};

const VALIDATION_FAILURE: u8 = 2;
const RUNTIME_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "echolab", version, about = "Reservoir-computing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a configuration and run its experiment.
    Run { config: PathBuf },
    /// Report every problem in a configuration without running it.
    Validate { config: PathBuf },
    /// List experiment names and their parameters.
    ListExperiments,
}

fn load(path: &Path) -> Result<config::ExperimentConfig, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic { field: path.display().to_string(), message: format!("cannot read: {e}") }])?;
    let seed = std::env::var(SEED_ENV).ok();
    config::parse(&text, seed.as_deref())
}

fn report(diags: &[Diagnostic]) -> ExitCode {
    for d in diags {
        eprintln!("error: {d}");
    }
    ExitCode::from(VALIDATION_FAILURE)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<16} {}", e.name(), e.summary());
                for p in e.params() {
                    println!("    {:<22} default {}", p.key, p.default);
                }
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(c) => {
                println!("{}: ok ({}, seed {})", config.display(), c.experiment, c.seed);
                ExitCode::SUCCESS
            }
            Err(d) => report(&d),
        },
        Command::Run { config } => {
            let c = match load(&config) {
                Ok(c) => c,
                Err(d) => return report(&d),
            };
            match echolab_cli::run(&c) {
                Ok(r) => {
                    println!("{} finished in {:.2}s", c.experiment, r.wall_time_s);
                    for f in &r.files {
                        println!("  {}", r.output_dir.join(f).display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {} failed: {e}", c.experiment);
                    ExitCode::from(RUNTIME_FAILURE)
                }
            }
        }
    }
}
