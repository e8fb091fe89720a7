//! `proxynn`: dataset generation, proxy training, landscape dumps,
//! two-step optimization and benchmarks from one binary.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit status classes: 2 configuration, 3 numeric, 4 I/O.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<proxynn_core::Error> for Failure {
    fn from(e: proxynn_core::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "proxynn", version, about = "Proxy-network inverse problem experiments")]
pub struct Cli {
    /// JSON run configuration, merged over the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// gramacy, rastrigin, burgers, ks, billiards2d or billiards4d.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Restore full dataset sizes, epochs, architectures and 256 problems.
    #[arg(long, global = true)]
    pub paper_scale: bool,
    /// Override one config field, e.g. `--set training.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample (Y*, X_s, L) triples into `dataset.pxds`.
    GenData,
    /// Train one proxy per σ in the sweep and pick the best.
    Train {
        /// Defaults to `<out>/dataset.pxds`.
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
    },
    /// Dump ground-truth (and proxy) loss grids.
    Landscape {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_name = "N[,N..]")]
        resolution: Vec<usize>,
        #[arg(long, value_name = "I")]
        problem_index: Option<u64>,
    },
    /// Solve one inverse problem.
    Optimize {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Starting guess; defaults to the center of the search box.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_name = "X[,X..]")]
        x0: Option<Vec<f64>>,
        /// Problem JSON; otherwise the seeded problem `--problem-index`.
        #[arg(long, value_name = "PATH")]
        problem: Option<PathBuf>,
        #[arg(long, value_name = "I", default_value_t = 0)]
        problem_index: u64,
        /// two_step, bfgs or gd.
        #[arg(long, default_value = "two_step")]
        method: String,
    },
    /// Compare methods over seeded problems.
    Benchmark {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_name = "M[,M..]")]
        methods: Vec<String>,
        /// 256 problems.
        #[arg(long)]
        full: bool,
        /// Also write per-run wall times to `timings.csv`.
        #[arg(long)]
        timings: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", Failure::Config(format!("--jobs {n}: {e}")));
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("proxynn: {e}");
            ExitCode::from(e.code())
        }
    }
}
