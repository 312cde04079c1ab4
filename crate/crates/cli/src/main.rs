//! `pacekit`: learn pacing plans from a single trace, replay request
//! streams, compute benchmarks, run scenario experiments and the property
//! suites.
//!
//! Exit codes: 0 success, 1 property failure, 2 input error, 3 runtime error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pacekit::pacing::RegularizerKind;
use pacekit::sim::Algo;

#[derive(Parser)]
#[command(
    name = "pacekit",
    version,
    about = "Budget pacing with a single sample per distribution"
)]
struct Cli {
    /// Print extra diagnostics to stderr
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

/// Instance bounds for commands that read a bare trace. Unset bounds are
/// taken from the trace itself.
#[derive(Args, Clone, Debug)]
struct BoundArgs {
    /// Total budget B
    #[arg(long)]
    budget: f64,

    /// Action cap x̄
    #[arg(long, default_value_t = 1.0)]
    action_cap: f64,

    /// Per-period consumption bound b̄
    #[arg(long)]
    consumption_bound: Option<f64>,

    /// Per-period reward bound f̄
    #[arg(long)]
    reward_bound: Option<f64>,

    /// Bound κ on reward per unit of consumption
    #[arg(long)]
    rate_bound: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the dual price and per-period targets from one trace
    Plan {
        /// Trace CSV with header t,f_coeff,b_coeff
        #[arg(long)]
        trace: PathBuf,

        #[command(flatten)]
        bounds: BoundArgs,

        /// Perturb reward coefficients by Unif[0, a] to break ratio ties
        #[arg(long, value_name = "A")]
        perturb: Option<f64>,

        /// Seed for the perturbation
        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Where to write the t,lambda CSV
        #[arg(long, default_value = "targets.csv")]
        out: PathBuf,
    },

    /// Replay a request stream under one policy and write its trajectory
    Simulate {
        /// Request stream CSV with header t,f_coeff,b_coeff
        #[arg(long)]
        stream: PathBuf,

        #[command(flatten)]
        bounds: BoundArgs,

        /// ftrl (needs --targets), static (needs --mu) or fixed
        #[arg(long, default_value = "ftrl")]
        algo: Algo,

        /// Targets CSV with header t,lambda
        #[arg(long)]
        targets: Option<PathBuf>,

        /// Dual price for the static policy
        #[arg(long)]
        mu: Option<f64>,

        /// quadratic or entropy
        #[arg(long, default_value = "quadratic")]
        regularizer: RegularizerKind,

        /// Step size; defaults to √(d_R/T)
        #[arg(long)]
        eta: Option<f64>,

        /// Where to write the trajectory CSV
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },

    /// FLUID, its optimal dual and the per-period expected consumption
    Bench {
        /// Scenario file; [instance] and the distribution section are read
        #[arg(long)]
        dists: PathBuf,

        /// Override the scenario budget
        #[arg(long)]
        budget: Option<f64>,

        /// Distribution section to use: true_dists or sample_dists
        #[arg(long, default_value = "true_dists")]
        section: String,

        /// Atoms per uniform distribution
        #[arg(long, default_value_t = 11)]
        grid: usize,

        /// Write the t,beta CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run a scenario's Monte Carlo experiment
    Experiment {
        /// Scenario file
        #[arg(long)]
        config: PathBuf,

        /// Output directory for report.csv and trajectory_<algo>.csv
        #[arg(long)]
        out: PathBuf,

        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,

        /// Override the number of trials
        #[arg(long)]
        trials: Option<usize>,
    },

    /// Run the property suites
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,

        /// Ten times fewer instances
        #[arg(long)]
        quick: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = pacekit::init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match commands::run(cli.command, cli.verbose) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
