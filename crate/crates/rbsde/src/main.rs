//! Thin CLI over the library runner: loads a JSON experiment config,
//! dispatches, prints the summary, and exits nonzero when any
//! assertion-class check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rbsde::config::ExperimentConfig;
use rbsde::runner::{run, RunOverrides};

#[derive(Parser)]
#[command(name = "rbsde", about = "Reflected BSDE experiments on scenario lattices")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory (overrides the config's output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for randomized sweeps.
    #[arg(long)]
    seed: Option<u64>,
    /// Validate the config and build the inputs without running.
    #[arg(long)]
    check_only: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match ExperimentConfig::from_path(&cli.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("{}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let overrides = RunOverrides {
        out: cli.out,
        seed: cli.seed,
        check_only: cli.check_only,
    };
    match run(&config, &overrides) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for artifact in &summary.artifacts {
                println!("wrote {}", artifact.display());
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
