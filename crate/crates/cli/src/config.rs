//! Flat `key = value` configuration for the backtest subcommand.

use std::collections::BTreeMap;
use std::path::Path;

use fbm_forecast::{BacktestConfig, EstimatorConfig, FbmSpec, LagMode, ThresholdMode};

use crate::args::{BacktestArgs, LagModeArg, ThresholdModeArg};
use crate::UsageError;

pub const KEYS: [&str; 12] = [
    "horizon_steps",
    "n_lags",
    "lag_mode",
    "threshold_mode",
    "lambda",
    "window",
    "tau1",
    "tau2",
    "known_hurst",
    "known_sigma",
    "seed",
    "steps_output",
];

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(UsageError(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(UsageError(format!("config line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

pub fn load(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(fbm_forecast::Error::from)?;
    Ok(parse(&text)?)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, UsageError> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| UsageError(format!("config key `{key}`: invalid value `{v}`"))))
        .transpose()
}

/// Merges file settings under command-line flags into a validated config.
pub fn backtest_config(file: &BTreeMap<String, String>, args: &BacktestArgs) -> Result<BacktestConfig, UsageError> {
    let defaults = BacktestConfig::default();
    let lag_mode = match args.lag_mode {
        Some(LagModeArg::Naive) => Some(LagMode::Naive),
        Some(LagModeArg::Optimal) => Some(LagMode::Optimal),
        None => match file.get("lag_mode").map(String::as_str) {
            None => None,
            Some("naive") => Some(LagMode::Naive),
            Some("optimal") => Some(LagMode::Optimal),
            Some(other) => return Err(UsageError(format!("config key `lag_mode`: invalid value `{other}`"))),
        },
    };
    let threshold_mode = match args.threshold_mode {
        Some(ThresholdModeArg::Zero) => Some(ThresholdMode::Zero),
        Some(ThresholdModeArg::Optimal) => Some(ThresholdMode::Optimal),
        None => match file.get("threshold_mode").map(String::as_str) {
            None => None,
            Some("zero") => Some(ThresholdMode::Zero),
            Some("optimal") => Some(ThresholdMode::Optimal),
            Some(other) => {
                return Err(UsageError(format!("config key `threshold_mode`: invalid value `{other}`")))
            }
        },
    };
    let est = EstimatorConfig::default();
    let estimator = EstimatorConfig {
        window: args.estimator.window.or(get(file, "window")?).unwrap_or(est.window),
        tau1: args.estimator.tau1.or(get(file, "tau1")?).unwrap_or(est.tau1),
        tau2: args.estimator.tau2.or(get(file, "tau2")?).unwrap_or(est.tau2),
    };
    let known_hurst: Option<f64> = args.known_hurst.or(get(file, "known_hurst")?);
    let known_sigma: Option<f64> = args.known_sigma.or(get(file, "known_sigma")?);
    let known_params = match (known_hurst, known_sigma) {
        (Some(h), s) => Some(
            FbmSpec::new(h, s.unwrap_or(1.0)).map_err(|e| UsageError(format!("known parameters: {e}")))?,
        ),
        (None, Some(_)) => return Err(UsageError("known_sigma requires known_hurst".into())),
        (None, None) => None,
    };
    let cfg = BacktestConfig {
        horizon_steps: args.horizon_steps.or(get(file, "horizon_steps")?).unwrap_or(defaults.horizon_steps),
        n_lags: args.n_lags.or(get(file, "n_lags")?).unwrap_or(defaults.n_lags),
        lag_mode: lag_mode.unwrap_or(defaults.lag_mode),
        threshold_mode: threshold_mode.unwrap_or(defaults.threshold_mode),
        lambda: args.lambda.or(get(file, "lambda")?).unwrap_or(defaults.lambda),
        estimator,
        known_params,
        seed: args.seed.or(get(file, "seed")?),
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}
