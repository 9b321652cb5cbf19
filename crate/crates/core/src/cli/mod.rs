//! Command-line front end.

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "heatplan", version = crate::eval::build_id(), about = "Heat-kernel diffusion planning on occupancy grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file; missing keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed (same as the override `seed=N`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; falls back to HEATPLAN_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Load the scenario written by `genmap` from this directory instead of generating it.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Dotted config overrides, e.g. sampler.epsilon=0.0008.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario: map.pgm and scenario.json.
    Genmap(Common),
    /// Goal distribution, perturbed fields and scores for every level as HKF1.
    Kernel(Common),
    /// Sample trajectories with the heat-kernel scores (JSONL).
    Sample(Common),
    /// Fit a tabulated score model by denoising score matching.
    Train(Common),
    /// Benchmark the configured planners; writes metrics.csv and metrics.json.
    Eval(Common),
    /// Render the scenario with optional field and trajectory overlays (PPM).
    Render {
        #[command(flatten)]
        common: Common,
        /// Scalar HKF1 field to shade.
        #[arg(long)]
        field: Option<PathBuf>,
        /// Trajectory JSONL to draw.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Time the main pipeline stages.
    Bench(Common),
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (common, job) = match cli.command {
        Command::Genmap(c) => (c, commands::Job::Genmap),
        Command::Kernel(c) => (c, commands::Job::Kernel),
        Command::Sample(c) => (c, commands::Job::Sample),
        Command::Train(c) => (c, commands::Job::Train),
        Command::Eval(c) => (c, commands::Job::Eval),
        Command::Render {
            common,
            field,
            trajectories,
        } => (common, commands::Job::Render { field, trajectories }),
        Command::Bench(c) => (c, commands::Job::Bench),
    };
    let cfg = match load_config(&common) {
        Ok(c) => c,
        Err(e @ Error::Io { .. }) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let threads = match resolve_threads(common.threads) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    match with_threads(threads, || commands::execute(&job, &common, &cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn load_config(common: &Common) -> crate::Result<RunConfig> {
    let text = match &common.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    let mut overrides = common.overrides.clone();
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    RunConfig::load(text.as_deref(), &overrides)
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("HEATPLAN_THREADS") {
            Ok(v) if !v.trim().is_empty() => {
                Some(v.trim().parse().map_err(|_| format!("HEATPLAN_THREADS must be a positive integer, got `{v}`"))?)
            }
            _ => None,
        },
    };
    if n == Some(0) {
        return Err("thread count must be positive".into());
    }
    Ok(n)
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(n: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match n {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_n: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    f()
}
