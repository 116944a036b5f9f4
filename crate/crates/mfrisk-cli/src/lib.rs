//! Command-line front end for the mean-field risk toolkit: config
//! ingestion, subcommand dispatch, experiment orchestration, and
//! reproducible JSON/CSV emission.
//!
//! Error handling contract: every failure prints a single JSON line on
//! stderr and exits with a class-specific code (2 usage, 3 config, 4
//! I/O, 5 numeric). Success prints the result to stdout unless --out
//! routes it to a file, and file writes are atomic.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod analyze;
pub mod config;
pub mod error;
pub mod figures_cmd;
pub mod output;
pub mod regimes;
pub mod simulate_cmd;

use analyze::{DiversityArgs, EquilibriumArgs, FluctuationArgs, FokkerPlanckArgs, RateArgs};
use error::{CliError, CliResult};
use figures_cmd::FiguresArgs;
use output::Format;
use simulate_cmd::SimArgs;

/// Global flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Global {
    /// Master seed as given; commands fall back to the config seed and
    /// then to 0.
    pub seed: Option<u64>,
    /// Root for relative output paths and figure bundles.
    pub out_dir: PathBuf,
    /// Output syntax override.
    pub format: Option<Format>,
}

#[derive(Parser, Debug)]
#[command(
    name = "mfrisk",
    version,
    about = "Interacting-agent risk model: simulation, equilibria, rare-event rates"
)]
pub struct Cli {
    /// Master RNG seed; overrides the config seed (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that relative --out paths and figure bundles land in.
    #[arg(long = "out-dir", global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for ensembles (or MFRISK_THREADS). Parallelism
    /// never changes numeric results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output syntax; the default is JSON for records and CSV for
    /// series.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Homogeneous particle system: one trajectory or a transition
    /// ensemble.
    Simulate(SimArgs),
    /// Grouped (heterogeneous-rate) particle system.
    SimulateHet(SimArgs),
    /// Reduced one-dimensional dynamics of the population mean.
    SimulateReduced(SimArgs),
    /// Bistable equilibrium solve with the small-h expansion.
    Equilibrium(EquilibriumArgs),
    /// Large-deviation rate of a systemic transition.
    Rate(RateArgs),
    /// Rate-diversity effects: exact values versus the second-order
    /// expansion.
    Diversity(DiversityArgs),
    /// Linearized fluctuation variances with an optional Monte Carlo
    /// check.
    Fluctuation(FluctuationArgs),
    /// Fokker-Planck density evolution on a fixed grid.
    FokkerPlanck(FokkerPlanckArgs),
    /// Standard figure regimes as CSV bundles with a manifest.
    Figures(FiguresArgs),
}

/// Applies --threads (or MFRISK_THREADS) to the process-wide worker
/// pool. Thread count affects wall time only, never results.
fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("MFRISK_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::Config(format!(
                    "MFRISK_THREADS must be a positive integer (got {v:?})"
                ))
            })?),
            Err(std::env::VarError::NotPresent) => None,
            Err(e) => {
                return Err(CliError::Config(format!("MFRISK_THREADS is unreadable: {e}")))
            }
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".to_string()));
        }
        // A second configuration attempt in the same process is a no-op;
        // the pool keeps its first size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let global = Global {
        seed: cli.seed,
        out_dir: cli.out_dir,
        format: cli.format,
    };
    match &cli.command {
        Command::Simulate(args) => simulate_cmd::run_simulate(&global, args),
        Command::SimulateHet(args) => simulate_cmd::run_simulate_het(&global, args),
        Command::SimulateReduced(args) => simulate_cmd::run_simulate_reduced(&global, args),
        Command::Equilibrium(args) => analyze::run_equilibrium(&global, args),
        Command::Rate(args) => analyze::run_rate(&global, args),
        Command::Diversity(args) => analyze::run_diversity(&global, args),
        Command::Fluctuation(args) => analyze::run_fluctuation(&global, args),
        Command::FokkerPlanck(args) => analyze::run_fokker_planck(&global, args),
        Command::Figures(args) => figures_cmd::run_figures(&global, args),
    }
}

/// Parses argv, runs the command, and returns the process exit code.
/// All failures are reported as one JSON line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::Usage(e.to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("{}", e.to_json());
        return e.exit_code();
    }
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
