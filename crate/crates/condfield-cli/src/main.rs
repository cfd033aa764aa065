//! `condfield` — run conditioned-field experiments from TOML configs.
//!
//! Subcommands: `run` executes an experiment and writes its artifacts
//! into a content-addressed run directory, `validate` checks a config
//! without running it, `list-experiments` prints the catalog. Exit
//! codes: 0 success, 1 internal failure, 2 config error, 3 resource cap
//! exceeded, 4 completed run with a failed verdict.

mod artifacts;
mod config;
mod experiments;
mod outcome;

use crate::artifacts::RunDir;
use crate::config::{Config, Experiment};
use crate::outcome::{CliError, EXIT_VERDICT};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "condfield",
    version,
    about = "Gaussian fields conditioned on large quadratic observables: \
             spectra, tails, conditioned sampling, and worked applications."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to the TOML config file.
        config: PathBuf,
        /// Output root directory (overrides the config's `[output] dir`;
        /// defaults to `runs`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override every RNG seed the config carries.
        #[arg(long)]
        seed: Option<u64>,
        /// Linear-algebra thread count (sets the BLAS thread environment
        /// variables before any computation).
        #[arg(long)]
        workers: Option<usize>,
        /// Overwrite the run directory if it already exists.
        #[arg(long)]
        force: bool,
    },
    /// Parse and validate a config file without running it.
    Validate {
        /// Path to the TOML config file.
        config: PathBuf,
    },
    /// List the available experiments.
    ListExperiments,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::ListExperiments => {
            for (experiment, description) in Experiment::catalog() {
                println!("{:<14} {description}", experiment.token());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let parsed = load_config(&config)?;
            parsed.validate()?;
            println!(
                "config ok: experiment {}, hash {}",
                parsed.experiment.token(),
                parsed.hash()?
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, out, seed, workers, force } => {
            run(&config, out, seed, workers, force)
        }
    }
}

fn load_config(path: &PathBuf) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Config::parse(&text)
}

fn run(
    config_path: &PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    force: bool,
) -> Result<ExitCode, CliError> {
    if let Some(k) = workers {
        if k == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        // The BLAS backend reads these at first use; set them before any
        // linear algebra runs.
        let threads = k.to_string();
        std::env::set_var("OPENBLAS_NUM_THREADS", &threads);
        std::env::set_var("OMP_NUM_THREADS", &threads);
    }

    let mut config = load_config(config_path)?;
    if let Some(s) = seed {
        config.override_seed(s);
    }
    config.validate()?;
    let hash = config.hash()?;

    let root = out
        .or_else(|| config.output_dir().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let dir_path = root.join(format!("{}-{}", config.experiment.token(), &hash[..8]));
    let mut dir = RunDir::prepare(dir_path, force)?;

    let verdicts = experiments::run(&config, &mut dir)?;
    let path = dir.path().to_path_buf();
    let records = dir.finish(&hash, config.effective_seed())?;

    for v in &verdicts {
        println!(
            "verdict {}: {} — {}",
            v.name,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!(
        "run {}: {} artifacts + manifest in {}",
        config.experiment.token(),
        records.len(),
        path.display()
    );
    if verdicts.iter().any(|v| !v.passed) {
        Ok(ExitCode::from(EXIT_VERDICT))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
