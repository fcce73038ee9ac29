//! `saddle-scope`: experiments, verification suites and plot data for
//! stochastic-gradient saddle escape.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use saddle_scope::rng::SEED_ENV;

#[derive(Debug, Parser)]
#[command(name = "saddle-scope", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; auxiliary files are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Root seed, overriding `run.seed` from the config.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trajectory and write it as CSV.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Escape-time statistics over a list of step sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Replicas per step size.
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',')]
        mu_list: Option<Vec<f64>>,
    },
    /// Run a verification suite: descent, deviation, limits, escape, final or all.
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
        /// Ensemble size of the Monte Carlo checks.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Cost, gradient, curvature and region on a square grid.
    Surface {
        #[command(flatten)]
        common: Common,
        /// Points per axis.
        #[arg(long)]
        grid: Option<usize>,
        /// Half-width of the square.
        #[arg(long)]
        w_max: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                error::EXIT_INVALID
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("saddle-scope: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
