//! `chanbal`: synthetic data, training, evaluation and routing from the
//! command line.

mod commands;
mod config;

use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for command-line misuse.
const EXIT_USAGE: u8 = 1;
/// Exit status for unreadable or invalid input data.
const EXIT_DATA: u8 = 2;
/// Exit status for an internal invariant breach.
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "chanbal", version, about = "Channel balance prediction and reliability routing")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// Global seed; every stochastic step derives its stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Channel graph snapshot (describegraph JSON).
    #[arg(long, value_name = "PATH")]
    pub snapshot: Option<PathBuf>,
    /// Balance labels CSV (`channel_id,src_pub,y_sat`).
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Number of positional-encoding dimensions.
    #[arg(long)]
    pub k_pe: Option<usize>,
    /// Number of trees per forest.
    #[arg(long)]
    pub trees: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic network with planted balances.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of nodes.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Write the feature matrix of one variant for the labeled channels.
    Featurize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        model: ModelArgs,
        /// Positional-encoding cache; read if present, written otherwise.
        #[arg(long, value_name = "PATH")]
        encodings: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Train one estimator on every labeled channel and save it as a bundle.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_name = "PATH")]
        encodings: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Split, train and score the estimator roster; write report files.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated estimator names (default: all eight).
        #[arg(long, value_delimiter = ',')]
        variant: Vec<String>,
        #[command(flatten)]
        model: ModelArgs,
        /// Choose forest settings on the validation fold.
        #[arg(long)]
        tune: bool,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Pearson correlation of each feature with the balance proportion.
    Correlate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "concatenated")]
        variant: String,
        #[command(flatten)]
        model: ModelArgs,
        /// Only report features with |r| at least this large.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
    },
    /// Ranked feature importances of a trained forest bundle.
    Importance {
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
    },
    /// Predict the balance proportion of every directed edge.
    Predict {
        #[arg(long, value_name = "PATH")]
        snapshot: Option<PathBuf>,
        /// Bundle directory or heuristic name.
        #[arg(long)]
        model: String,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Most reliable path for one payment.
    Route {
        #[arg(long, value_name = "PATH")]
        snapshot: Option<PathBuf>,
        /// Bundle directory, heuristic name or `capacity-uniform`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dest: String,
        #[arg(long)]
        amount_sat: u64,
    },
    /// Replay a seeded payment workload against true balances.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated bundle directories or names (`oracle`,
        /// `capacity-uniform`, `equal-split`, `local-max-htlc`).
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<String>,
        #[arg(long)]
        payments: Option<usize>,
        #[arg(long)]
        max_retries: Option<usize>,
        /// Move liquidity along successful paths.
        #[arg(long)]
        shift_balances: bool,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Why a command stopped.
pub enum Failure {
    Usage(String),
    Data(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(message))) => {
            eprintln!("error: {message}");
            eprintln!("run `chanbal --help` for usage");
            ExitCode::from(EXIT_USAGE)
        }
        Ok(Err(Failure::Data(message))) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_DATA)
        }
        Err(_) => {
            eprintln!("error: internal invariant violated; this is a bug");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
