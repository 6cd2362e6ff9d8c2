use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use strcgp::hyperopt::Param;
use strcgp::ssm::{SpatialFamily, TemporalFamily};

#[derive(Debug, Parser)]
#[command(name = "strcgp", version, about = "Outlier-robust spatio-temporal Gaussian process regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Optimize kernel hyperparameters and write a JSON result.
    Fit(FitArgs),
    /// Write filtered or smoothed predictions as CSV.
    Predict(PredictArgs),
    /// Posterior influence curve and metric report.
    Diagnose(DiagnoseArgs),
    /// Time filter and smoother runs over growing n_t.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    TemporalMatern,
    StQuadratic,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Standard Kalman update.
    Stgp,
    /// IMQ weights centred on the one-step predictive.
    StRcgp,
    /// IMQ weights with a fixed centre and shrinkage.
    RcgpFixed,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Stgp => "stgp",
            Method::StRcgp => "st-rcgp",
            Method::RcgpFixed => "rcgp-fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveChoice {
    Standard,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummaryChoice {
    Quantile,
    Mean,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum SourceChoice {
    #[default]
    Smoothed,
    Filtered,
}

fn temporal_family(s: &str) -> Result<TemporalFamily, String> {
    s.parse().map_err(|e: strcgp::Error| e.to_string())
}

fn spatial_family(s: &str) -> Result<SpatialFamily, String> {
    s.parse().map_err(|e: strcgp::Error| e.to_string())
}

fn param(s: &str) -> Result<Param, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown parameter '{s}'"))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Generator configuration as JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed (default 0).
    #[arg(long, env = "STRCGP_SEED")]
    pub seed: Option<u64>,
    /// Points per side of the square spatial grid.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub n_t: Option<usize>,
    #[arg(long)]
    pub outlier_rate: Option<f64>,
    /// Dataset CSV; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Truth CSV; defaults to `<output stem>.truth.csv` next to the output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Model selection shared by every command that runs the filter.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Kernel from a fit result or a bare kernel JSON file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Temporal kernel: exponential, matern32, matern52 or wiener.
    #[arg(long, value_parser = temporal_family)]
    pub kernel: Option<TemporalFamily>,
    #[arg(long)]
    pub lengthscale: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Spatial kernel: se or matern32.
    #[arg(long, value_parser = spatial_family)]
    pub spatial_kernel: Option<SpatialFamily>,
    #[arg(long)]
    pub spatial_lengthscale: Option<f64>,
    #[arg(long)]
    pub spatial_amplitude: Option<f64>,
    #[arg(long)]
    pub noise_variance: Option<f64>,
    /// IMQ centre for rcgp-fixed (default: median of y).
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// IMQ shrinkage c for rcgp-fixed (default: scaled MAD of y).
    #[arg(long)]
    pub shrinkage: Option<f64>,
    /// IMQ exponent.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Observations CSV.
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ground-truth CSV written by `simulate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveChoice>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Finite-difference step in log-parameter space.
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Per-step reduction for the robust objective.
    #[arg(long, value_enum)]
    pub summary: Option<SummaryChoice>,
    /// Quantile level for `--summary quantile`.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Parameters to hold fixed, e.g. `noise_variance`.
    #[arg(long, value_delimiter = ',', value_parser = param)]
    pub fix: Vec<Param>,
    /// Parameters to optimize that are fixed by default.
    #[arg(long, value_delimiter = ',', value_parser = param)]
    pub free: Vec<Param>,
    /// Result JSON; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t)]
    pub source: SourceChoice,
    /// CSV of extra query points with header `t,s1..`.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Forecast this far past the last observation at every site.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Forecast spacing (default: the last observed spacing).
    #[arg(long)]
    pub step: Option<f64>,
    /// Predictions CSV; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Metric report JSON for the observed rows.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ground-truth CSV written by `simulate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Score an existing predictions CSV instead of running the influence curve.
    #[arg(long, conflicts_with = "data")]
    pub predictions: Option<PathBuf>,
    /// Time index of the contaminated point.
    #[arg(long)]
    pub site_t: Option<usize>,
    /// Site index of the contaminated point.
    #[arg(long, default_value_t = 0)]
    pub site_s: usize,
    /// Contamination sizes in units of the noise standard deviation.
    #[arg(long, value_delimiter = ',')]
    pub magnitudes: Option<Vec<f64>>,
    /// Relative change between the two largest magnitudes counted as a plateau.
    #[arg(long, default_value_t = 0.05)]
    pub plateau_tol: f64,
    /// Influence curve CSV; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Random seed (default 0).
    #[arg(long, env = "STRCGP_SEED")]
    pub seed: Option<u64>,
    /// Timing CSV; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}
