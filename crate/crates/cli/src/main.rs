//! `meandim`: mean dimension experiments from a JSON config.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 when an
//! evaluation fails, 1 when output cannot be written.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meandim::Strategy;

use commands::{CmdError, Outputs};
use config::{Experiment, Overrides};

#[derive(Parser)]
#[command(name = "meandim", version, about = "Estimate mean dimension and Sobol' indices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Comma-separated strategies: naive, radial, winding_full, winding_truncated.
    #[arg(long, global = true, value_delimiter = ',')]
    strategy: Option<Vec<Strategy>>,
    #[arg(long = "N", global = true)]
    n: Option<u64>,
    #[arg(long = "R", global = true)]
    r: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One estimate of delta, sigma^2 and nu per strategy.
    Estimate,
    /// Replicate variances of the delta estimates against closed forms.
    CompareVariance,
    /// Per-pixel histograms from an image archive.
    Histograms,
    /// Per-pixel index maps of a network output.
    Maps,
    /// Mean dimension table of a network over samplers, targets and classes.
    Report,
    /// Closed-form values for a test function.
    Oracles,
}

fn run(cli: Cli) -> Result<(Experiment, Outputs), CmdError> {
    let x = Experiment::load(
        cli.config.as_deref(),
        Overrides {
            seed: cli.seed,
            out_dir: cli.out_dir,
            strategies: cli.strategy,
            n: cli.n,
            r: cli.r,
        },
    )
    .map_err(CmdError::Config)?;
    let out = match cli.command {
        Command::Estimate => commands::estimate(&x),
        Command::CompareVariance => commands::compare_variance(&x),
        Command::Histograms => commands::histograms(&x),
        Command::Maps => commands::maps(&x),
        Command::Report => commands::report(&x),
        Command::Oracles => commands::oracles(&x),
    }?;
    Ok((x, out))
}

fn write(x: &Experiment, out: &Outputs) -> std::io::Result<()> {
    std::fs::create_dir_all(&x.out_dir)?;
    for (name, bytes) in &out.files {
        let path = x.out_dir.join(name);
        std::fs::write(&path, bytes)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok((x, out)) => match write(&x, &out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: writing output: {e}");
                ExitCode::from(1)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CmdError::Config(_) => 2,
                CmdError::Eval(_) => 3,
            })
        }
    }
}
