//! `rebpr` command line: analyze a dataset against its configuration-model
//! null, train one reweighted run, sweep the (α, β) grid, and reduce
//! persisted runs into report tables.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use rebpr::harness::{
    load_experiment_spec, load_train_config, run_analyze, run_grid, run_report, run_train,
    AnalyzeOptions,
};

#[derive(Parser)]
#[command(
    name = "rebpr",
    version,
    about = "Reweighted pairwise-ranking experiments for implicit-feedback recommenders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile users and test observed quadrant counts against degree-preserving rewirings
    Analyze {
        /// Train adjacency file (one line per user: id item item ...)
        #[arg(long)]
        train: PathBuf,
        /// Test adjacency file in the same layout
        #[arg(long)]
        test: PathBuf,
        /// Directory for profiles.csv, ccdf.csv, significance.csv, id_map.csv
        #[arg(long, default_value = "analysis")]
        out_dir: PathBuf,
        /// Quantile bins per axis
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Number of rewired null samples
        #[arg(long, default_value_t = 100)]
        null_samples: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// Accepted swaps per sample, as a multiple of the edge count
        #[arg(long, default_value_t = 10)]
        swap_multiplier: u64,
        /// Use the 2x2 mean-boundary grid instead of quantile bins
        #[arg(long)]
        means: bool,
    },
    /// Train and evaluate one configuration
    Train {
        /// Run configuration JSON (variant, alpha, beta, epochs, seed, model, data)
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the (alpha, beta) grid, reusing finished runs, and pick a winner
    Grid {
        /// Experiment specification JSON
        #[arg(long)]
        spec: PathBuf,
    },
    /// Reduce persisted runs into results.csv, pareto.csv, quadrants.csv
    Report {
        /// Directory holding per-run subdirectories
        #[arg(long)]
        runs: PathBuf,
        /// Directory for the report tables
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
    },
}

fn run(command: Command) -> rebpr::Result<()> {
    match command {
        Command::Analyze {
            train,
            test,
            out_dir,
            bins,
            null_samples,
            seed,
            swap_multiplier,
            means,
        } => run_analyze(&AnalyzeOptions {
            train,
            test,
            out_dir,
            bins,
            null_samples,
            seed,
            swap_multiplier,
            means,
        }),
        Command::Train { config } => {
            let cfg = load_train_config(&config)?;
            run_train(&cfg).map(|_| ())
        }
        Command::Grid { spec } => {
            let spec = load_experiment_spec(&spec)?;
            run_grid(&spec).map(|_| ())
        }
        Command::Report { runs, out_dir } => run_report(&runs, &out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
