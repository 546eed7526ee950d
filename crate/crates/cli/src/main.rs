//! Batch front-end: simulate, estimate, refine, evaluate, analyze, bench.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Results go to stdout,
//! diagnostics to stderr.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub const THREADS_ENV: &str = "LIDAR_NORMALS_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl From<lidar_normals::io::IoError> for CliError {
    fn from(e: lidar_normals::io::IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "lidar-normals",
    version,
    about = "Synthetic LiDAR generation, classical normal estimation, and graph-total-variation refinement"
)]
struct Cli {
    /// Worker threads (default: all cores, or the LIDAR_NORMALS_THREADS env var).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a sequence of frames from a scene description.
    Generate(GenerateArgs),
    /// Estimate per-point normals for every frame of a sequence.
    Estimate(EstimateArgs),
    /// Refine initial normal fields against the smoothness objective.
    Refine(RefineArgs),
    /// Score predicted normals against ground truth.
    Eval(EvalArgs),
    /// Export a spherical density map of the ground-truth normals.
    Analyze(AnalyzeArgs),
    /// Time the estimate and refine stages per frame.
    Bench(BenchArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Scene description file (TOML).
    #[arg(long)]
    scene: std::path::PathBuf,
    /// Sensor configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    sensor: Option<std::path::PathBuf>,
    /// Number of frames to simulate.
    #[arg(long)]
    frames: usize,
    /// Master seed; frames derive their own seeds from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for frames and the sequence manifest.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Split tag recorded in the manifest.
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Sequence manifest.
    #[arg(long = "in")]
    input: std::path::PathBuf,
    /// Estimator name: pca or jet.
    #[arg(long, default_value = "pca")]
    method: String,
    /// Neighborhood size.
    #[arg(long, default_value_t = 32)]
    k: usize,
    /// Jet polynomial degree (jet only).
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Output directory for normal-field files.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args)]
pub struct RefineArgs {
    /// Sequence manifest.
    #[arg(long = "in")]
    input: std::path::PathBuf,
    /// Directory holding the initial normal-field files.
    #[arg(long)]
    init: std::path::PathBuf,
    /// Refinement config file (TOML); flags below override its values.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Trade-off between data term and regularizers.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Graph neighborhood size.
    #[arg(long)]
    k: Option<usize>,
    /// Edge-weight decay scale in meters.
    #[arg(long)]
    sigma: Option<f64>,
    /// Maximum descent iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Initial per-point step size.
    #[arg(long)]
    step: Option<f64>,
    /// Huber smoothing width for the L1 terms.
    #[arg(long)]
    huber_delta: Option<f64>,
    /// Relative-decrease convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Project onto the unit sphere after every accepted step.
    #[arg(long)]
    renormalize: bool,
    /// Output directory for refined normal-field files.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of predicted normal-field files.
    #[arg(long)]
    pred: std::path::PathBuf,
    /// Ground-truth sequence manifest.
    #[arg(long)]
    gt: std::path::PathBuf,
    /// Report destination (canonical text form).
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Sequence manifest (ground-truth normals are analyzed).
    #[arg(long = "in")]
    input: std::path::PathBuf,
    /// Kernel concentration.
    #[arg(long, default_value_t = 50.0)]
    kappa: f64,
    /// Sphere-grid resolution (bands; columns are 2x this).
    #[arg(long, default_value_t = 64)]
    grid_res: u32,
    /// Evaluate at most this many normals (0 = all), strided deterministically.
    #[arg(long, default_value_t = 20_000)]
    sample: usize,
    /// Output CSV path.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Sequence manifest.
    #[arg(long = "in")]
    input: std::path::PathBuf,
    /// Estimator name: pca or jet.
    #[arg(long, default_value = "pca")]
    method: String,
    /// Neighborhood size for the estimator.
    #[arg(long, default_value_t = 32)]
    k: usize,
    /// Refinement iterations to time.
    #[arg(long, default_value_t = 20)]
    iters: usize,
}

fn configure_threads(requested: Option<usize>) -> Result<(), CliError> {
    let from_env = std::env::var(THREADS_ENV)
        .ok()
        .map(|v| {
            v.parse::<usize>().map_err(|_| {
                CliError::usage(format!("{THREADS_ENV} must be an integer, got '{v}'"))
            })
        })
        .transpose()?;
    if let Some(threads) = requested.or(from_env) {
        if threads == 0 {
            return Err(CliError::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Die quietly when a downstream pipe closes, like other line-oriented tools.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return ExitCode::SUCCESS;
                }
                _ => 1,
            };
            eprint!("{e}");
            return ExitCode::from(code);
        }
    };

    let result = configure_threads(cli.threads).and_then(|()| match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Estimate(args) => commands::estimate(args),
        Command::Refine(args) => commands::refine(args),
        Command::Eval(args) => commands::eval(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Bench(args) => commands::bench(args),
    });

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
