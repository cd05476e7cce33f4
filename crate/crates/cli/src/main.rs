//! `paneitz`: batch driver for the radial Paneitz–Branson laboratory.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Overrides;
use crate::error::CliError;

/// Worker count for the concurrent ε-sweeps; defaults to all cores.
const WORKERS_ENV: &str = "PANEITZ_WORKERS";

#[derive(Parser)]
#[command(name = "paneitz", version, about = "Radial Paneitz-Branson Dirichlet problems: solve, continue, expand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the I_p^q and sphere-volume identities.
    VerifyIdentities {
        #[arg(long, default_value_t = 5)]
        n_min: usize,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Test hook: multiply I_p^q by 1 + K·p.
        #[arg(long, hide = true)]
        perturb_ipq: Option<f64>,
    },
    /// Minimize at a single exponent (2♯ unless `solver.q` is set).
    Solve(RunArgs),
    /// Continue the subcritical minimizers up to 2♯.
    Continue(RunArgs),
    /// Sweep test functions in ε and fit the expansion of their quotient.
    Expand(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Base output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `problem.grid_size`.
    #[arg(long)]
    grid_size: Option<usize>,
    /// Overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            grid_size: self.grid_size,
            seed: self.seed,
        }
    }
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(e.to_string()))
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    configure_workers()?;
    match cli.command {
        Command::VerifyIdentities {
            n_min,
            n_max,
            out,
            perturb_ipq,
        } => commands::verify_identities(n_min, n_max, perturb_ipq, &out),
        Command::Solve(a) => commands::solve(&a.config, &a.overrides()),
        Command::Continue(a) => commands::continue_run(&a.config, &a.overrides()),
        Command::Expand(a) => commands::expand(&a.config, &a.overrides()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => {
            println!("reports written to {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
