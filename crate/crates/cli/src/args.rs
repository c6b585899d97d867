use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fbm-forecast", version, about = "Forecasting fractional Brownian motion in discrete time")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write the result to this file instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Emit JSON at full precision instead of human-readable text.
    #[arg(long, global = true)]
    pub json: bool,

    /// Run every computation on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate fBm sample paths as CSV.
    Simulate(SimulateArgs),
    /// Non-conditional hit ratio of the predictor on the given lags.
    HitRatio(ModelArgs),
    /// Lags maximising the hit ratio, as JSON.
    OptimalLags(OptimalLagsArgs),
    /// Ternary strategy probabilities at a threshold.
    Ternary(TernaryArgs),
    /// Risk-adjusted optimal threshold and the strategy metrics there.
    OptimalTheta(OptimalThetaArgs),
    /// Rolling Hurst exponent estimates of a `timestamp,value` CSV.
    EstimateHurst(EstimateHurstArgs),
    /// Run the rolling forecast-and-trade pipeline; prints the report as JSON.
    Backtest(BacktestArgs),
    /// Closed forms against Monte Carlo estimates.
    McVerify(McVerifyArgs),
    /// Optimal lag tables for H = 0.65 (1) or H = 0.15 (2), as CSV.
    Tables(TablesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Exact, on any grid; cost grows with the cube of the grid size.
    Cholesky,
    /// Exact on a uniform grid in O(n log n).
    Circulant,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = hurst)]
    pub hurst: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub sigma: f64,
    /// Sampling interval.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub step: f64,
    /// Number of steps after t = 0.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=10_000_000))]
    pub points: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=100_000))]
    pub paths: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Cholesky)]
    pub method: Method,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = hurst)]
    pub hurst: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub sigma: f64,
    /// Forecast horizon.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub h: f64,
    /// Comma-separated, strictly increasing positive lags δ_1..δ_n (δ_0 = 0).
    #[arg(long, value_parser = lag_list, default_value = "1")]
    pub lags: LagList,
}

#[derive(Debug, Args)]
pub struct OptimalLagsArgs {
    #[arg(long, value_parser = hurst)]
    pub hurst: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=8))]
    pub n: u64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvaluatorArg {
    Exact,
    Taylor,
}

#[derive(Debug, Args)]
pub struct TernaryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Threshold on the forecast, in the units of the process.
    #[arg(long, value_parser = non_negative, conflicts_with = "theta_over_a", required_unless_present = "theta_over_a")]
    pub theta: Option<f64>,
    /// Threshold as a multiple of the forecast standard deviation `a`.
    #[arg(long, value_parser = non_negative)]
    pub theta_over_a: Option<f64>,
    #[arg(long, value_enum, default_value_t = EvaluatorArg::Exact)]
    pub evaluator: EvaluatorArg,
}

#[derive(Debug, Args)]
pub struct OptimalThetaArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Risk aversion.
    #[arg(long, value_parser = finite, allow_negative_numbers = true)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    /// Observations per window.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub tau1: Option<usize>,
    #[arg(long)]
    pub tau2: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateHurstArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LagModeArg {
    Naive,
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdModeArg {
    Zero,
    Optimal,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Flat `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub horizon_steps: Option<usize>,
    #[arg(long)]
    pub n_lags: Option<usize>,
    #[arg(long, value_enum)]
    pub lag_mode: Option<LagModeArg>,
    #[arg(long, value_enum)]
    pub threshold_mode: Option<ThresholdModeArg>,
    #[arg(long, value_parser = finite, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Bypass estimation and use this Hurst exponent at every step.
    #[arg(long, value_parser = hurst)]
    pub known_hurst: Option<f64>,
    /// Volatility used together with `--known-hurst`.
    #[arg(long, value_parser = positive, requires = "known_hurst")]
    pub known_sigma: Option<f64>,
    /// Seed that generated the input, echoed into the report.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the per-step records to this CSV file.
    #[arg(long)]
    pub steps_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McVerifyArgs {
    #[arg(long, value_parser = hurst)]
    pub hurst: f64,
    /// Number of lags; the hit-ratio-optimal ones are used unless `--lags` is given.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=8), default_value_t = 1)]
    pub n: u64,
    #[arg(long, value_parser = lag_list, conflicts_with = "n")]
    pub lags: Option<LagList>,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub h: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(2..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Thresholds, as multiples of `a`, at which the strategy metrics are checked.
    #[arg(long, value_parser = non_negative, value_delimiter = ',', default_value = "0,0.5,1,2")]
    pub theta_over_a: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub which: u8,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..=8))]
    pub max_n: u64,
}

fn number(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

fn finite(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got {v}"))
    }
}

pub fn hurst(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("the Hurst exponent must lie in (0, 1), got {v}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagList(pub Vec<f64>);

fn lag_list(s: &str) -> Result<LagList, String> {
    let lags: Vec<f64> = s.split(',').map(positive).collect::<Result<_, _>>()?;
    if lags.len() > 8 {
        return Err(format!("at most 8 lags are supported, got {}", lags.len()));
    }
    if lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("lags must be strictly increasing, got {s}"));
    }
    Ok(LagList(lags))
}
