//! marginlab command line: reproducible optimizer runs, bound verification,
//! lower-bound and recursion campaigns, sweeps, and generalization estimates.
//!
//! Exit codes: 0 success / all bounds satisfied, 1 a certified bound was
//! violated, 2 only precondition-not-met reports, 3 usage error, 4 runtime
//! error.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use marginlab::Loss;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATED: u8 = 1;
pub const EXIT_PRECONDITION: u8 = 2;
pub const EXIT_USAGE: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

/// Accepts plain decimals and exact rational strings like `1/8`.
pub fn parse_ratio(s: &str) -> Result<f64, String> {
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in {s:?}"))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in {s:?}"))?;
        if d == 0.0 {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(n / d)
    } else {
        s.trim().parse().map_err(|_| format!("bad number {s:?}"))
    }
}

fn parse_loss(s: &str) -> Result<Loss, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Parser)]
#[command(
    name = "marginlab",
    version,
    about = "Gradient methods on separable data with bound certification"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate (or load) a dataset, run one optimizer, write the trajectory.
    Run(RunArgs),
    /// Certify bounds against a finished run directory.
    Verify(VerifyArgs),
    /// Adversarial lower-bound campaign over a grid of horizons.
    Lowerbound(LowerboundArgs),
    /// Check the two-cluster recursion predicates up to a horizon.
    Inittime(InittimeArgs),
    /// Run a parameter sweep from a JSON config.
    Sweep(SweepArgs),
    /// Monte-Carlo generalization error of a finished run.
    GenError(GenErrorArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Optimizer: flow, gd or sgd.
    #[arg(long)]
    pub method: String,
    /// Loss: exp, logistic or `poly:<b>`.
    #[arg(long, value_parser = parse_loss)]
    pub loss: Loss,
    /// Witness margin of the generated dataset.
    #[arg(long, value_parser = parse_ratio, default_value = "0.25")]
    pub gamma: f64,
    /// Number of training points.
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    /// Ambient dimension.
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    /// Update steps (gd/sgd).
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Time horizon (flow).
    #[arg(long, value_parser = parse_ratio, default_value = "100")]
    pub t_end: f64,
    /// Constant step size (gd/sgd).
    #[arg(long, value_parser = parse_ratio, default_value = "1")]
    pub eta: f64,
    /// Seed for dataset generation and the SGD index stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Integrator tolerance (flow).
    #[arg(long, value_parser = parse_ratio, default_value = "1e-8")]
    pub rel_tol: f64,
    /// Number of geometric checkpoints (flow).
    #[arg(long, default_value_t = 64)]
    pub checkpoints: usize,
    /// Load `dataset.csv` / `dataset.meta.json` from this directory instead
    /// of generating.
    #[arg(long)]
    pub data_in: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write tidy long-format plot data.
    #[arg(long, default_value_t = false)]
    pub plot_data: bool,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Run directory produced by `run` (or a lowerbound subdirectory).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Comma-separated bound kinds to certify.
    #[arg(long, value_delimiter = ',', required = true)]
    pub bounds: Vec<String>,
    /// Margin parameter; defaults to the dataset witness margin.
    #[arg(long, value_parser = parse_ratio)]
    pub gamma: Option<f64>,
    /// Quantile exponent for the margin-fraction kinds.
    #[arg(long, value_parser = parse_ratio)]
    pub alpha: Option<f64>,
    /// Violating fraction for the quantile kinds.
    #[arg(long, value_parser = parse_ratio)]
    pub p: Option<f64>,
    /// Tail exponent for poly_margin.
    #[arg(long, value_parser = parse_ratio)]
    pub b: Option<f64>,
    /// Constant for generalization_reference.
    #[arg(long, value_parser = parse_ratio)]
    pub c: Option<f64>,
}

#[derive(Args)]
pub struct LowerboundArgs {
    /// Number of points.
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    /// Margin parameter in (0, 1/8].
    #[arg(long, value_parser = parse_ratio, default_value = "1/8")]
    pub gamma: f64,
    /// Comma-separated horizons; each gets its own dataset and run.
    #[arg(long, value_delimiter = ',', default_value = "64,256,1024")]
    pub steps: Vec<usize>,
    /// Step size, at most 1.
    #[arg(long, value_parser = parse_ratio, default_value = "1")]
    pub eta: f64,
    /// Illustration mode: fixed 90/10 split at margin 1/5, no certification.
    #[arg(long, default_value_t = false)]
    figure1: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write tidy long-format plot data.
    #[arg(long, default_value_t = false)]
    pub plot_data: bool,
}

#[derive(Args)]
pub struct InittimeArgs {
    #[arg(long, value_parser = parse_ratio, default_value = "1/8")]
    pub gamma: f64,
    #[arg(long, value_parser = parse_ratio, default_value = "1/8")]
    pub epsilon: f64,
    #[arg(long, value_parser = parse_ratio, default_value = "1")]
    pub eta: f64,
    /// Recursion steps to simulate.
    #[arg(long, default_value_t = 1_000_000)]
    pub horizon: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SweepArgs {
    /// JSON file mirroring the sweep config schema.
    #[arg(long)]
    pub config: PathBuf,
    /// Also write tidy long-format plot data.
    #[arg(long, default_value_t = false)]
    pub plot_data: bool,
}

#[derive(Args)]
pub struct GenErrorArgs {
    /// Run directory produced by `run`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fresh test samples to draw.
    #[arg(long, default_value_t = 100_000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score the averaged iterate instead of the final one (SGD runs).
    #[arg(long, default_value_t = false)]
    pub use_averaged: bool,
}

/// Errors carry their exit code so dispatch stays uniform.
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<marginlab::Error> for CliError {
    fn from(e: marginlab::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            let _ = e.print();
            return if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                ExitCode::from(EXIT_OK)
            } else {
                ExitCode::from(EXIT_USAGE)
            };
        }
    };
    let outcome = match cli.cmd {
        Cmd::Run(args) => commands::run(args),
        Cmd::Verify(args) => commands::verify(args),
        Cmd::Lowerbound(args) => commands::lowerbound(args),
        Cmd::Inittime(args) => commands::inittime(args),
        Cmd::Sweep(args) => commands::sweep(args),
        Cmd::GenError(args) => commands::gen_error(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("marginlab: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
