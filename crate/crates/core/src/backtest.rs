//! Rolling forecast-and-trade pipeline over an observed series.
//!
//! At every eligible step `t` the pipeline estimates `(Ĥ, σ̂)` on the
//! trailing window (or uses injected known parameters), builds the predictor
//! on integer lags, forecasts the `h`-step return, applies the threshold rule
//! and records the realized outcome `v[t+h] - v[t]`. Evaluation steps overlap
//! whenever `h > 1`; standard errors are then optimistic and the report says
//! so.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fbm::FbmSpec;
use crate::hurst::{clamp_hurst, estimate_hurst, EstimatorConfig};
use crate::lags::{optimize_lags, MAX_LAGS};
use crate::predictor::{solve_predictor, LagStructure};
use crate::strategy::optimal_threshold;

/// Width of the `Ĥ` buckets sharing one set of optimal lags.
pub const LAG_CACHE_RESOLUTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Timestamp {
    Index(i64),
    Iso(String),
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Timestamp::Index(i) => write!(f, "{i}"),
            Timestamp::Iso(s) => f.write_str(s),
        }
    }
}

fn looks_like_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 10
        && b[..4].iter().all(u8::is_ascii_digit)
        && b[4] == b'-'
        && b[5..7].iter().all(u8::is_ascii_digit)
        && b[7] == b'-'
        && b[8..10].iter().all(u8::is_ascii_digit)
}

impl Timestamp {
    pub fn parse(raw: &str) -> Option<Self> {
        let s = raw.trim();
        if let Ok(i) = s.parse::<i64>() {
            return Some(Timestamp::Index(i));
        }
        looks_like_iso_date(s).then(|| Timestamp::Iso(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub timestamp: Timestamp,
    pub value: f64,
}

/// Series indexed `0..values.len()`.
pub fn records_from_values(values: &[f64]) -> Vec<SeriesRecord> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| SeriesRecord { timestamp: Timestamp::Index(i as i64), value: *v })
        .collect()
}

/// Reads a `timestamp,value` CSV. Rows must be strictly increasing in
/// timestamp; the first offending line is reported (1-based, header = 1).
pub fn read_series<R: Read>(reader: R) -> Result<Vec<SeriesRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.len() != 2 || &header[0] != "timestamp" || &header[1] != "value" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `timestamp,value`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out: Vec<SeriesRecord> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != 2 {
            return Err(Error::Parse { line, message: format!("expected 2 fields, got {}", row.len()) });
        }
        let timestamp = Timestamp::parse(&row[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unrecognised timestamp `{}`", &row[0]),
        })?;
        let value: f64 = row[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric value `{}`", &row[1]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse { line, message: format!("non-finite value `{}`", &row[1]) });
        }
        if let Some(prev) = out.last() {
            let same_kind = matches!(
                (&prev.timestamp, &timestamp),
                (Timestamp::Index(_), Timestamp::Index(_)) | (Timestamp::Iso(_), Timestamp::Iso(_))
            );
            if !same_kind {
                return Err(Error::Parse { line, message: "mixed integer and ISO-8601 timestamps".into() });
            }
            if timestamp <= prev.timestamp {
                return Err(Error::Parse {
                    line,
                    message: format!("timestamp `{timestamp}` does not increase (previous `{}`)", prev.timestamp),
                });
            }
        }
        out.push(SeriesRecord { timestamp, value });
    }
    Ok(out)
}

pub fn load_series(path: &Path) -> Result<Vec<SeriesRecord>> {
    read_series(std::fs::File::open(path)?)
}

pub fn write_series<W: Write>(records: &[SeriesRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["timestamp", "value"]).map_err(csv_err)?;
    for r in records {
        w.write_record([r.timestamp.to_string(), format!("{:?}", r.value)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// SHA-256 of the timestamps and exact value bits.
pub fn series_digest(records: &[SeriesRecord]) -> String {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(r.timestamp.to_string().as_bytes());
        hasher.update([0u8]);
        hasher.update(r.value.to_bits().to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LagMode {
    /// Lags `h, 2h, …, nh`.
    Naive,
    /// Hit-ratio-optimal lags for the current `Ĥ`, rounded to whole steps.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Zero,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub horizon_steps: usize,
    pub n_lags: usize,
    pub lag_mode: LagMode,
    pub threshold_mode: ThresholdMode,
    pub lambda: f64,
    pub estimator: EstimatorConfig,
    /// When set, estimation is bypassed and these parameters are used at every step.
    pub known_params: Option<FbmSpec>,
    /// Seed that generated the input, echoed into the report when known.
    pub seed: Option<u64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 1,
            n_lags: 1,
            lag_mode: LagMode::Naive,
            threshold_mode: ThresholdMode::Zero,
            lambda: 0.0,
            estimator: EstimatorConfig::default(),
            known_params: None,
            seed: None,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::InvalidParameter("horizon_steps must be at least 1".into()));
        }
        if !(1..=MAX_LAGS).contains(&self.n_lags) {
            return Err(Error::InvalidParameter(format!(
                "n_lags must be in 1..={MAX_LAGS}, got {}",
                self.n_lags
            )));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be finite, got {}", self.lambda)));
        }
        self.estimator.validate()
    }

    /// Short human-readable label, used as a row name in comparisons.
    pub fn label(&self) -> String {
        let lags = match self.lag_mode {
            LagMode::Naive => "naive",
            LagMode::Optimal => "optimal",
        };
        let theta = match self.threshold_mode {
            ThresholdMode::Zero => "theta=0".to_string(),
            ThresholdMode::Optimal => format!("theta*(lambda={})", self.lambda),
        };
        format!("{lags} lags n={}, {theta}", self.n_lags)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub timestamp: Timestamp,
    pub hurst: f64,
    pub sigma: f64,
    pub forecast: f64,
    pub theta: f64,
    pub position: i8,
    pub realized: f64,
    pub strategy_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub config: BacktestConfig,
    pub series_digest: String,
    pub series_len: usize,
    pub steps: usize,
    /// Eligible steps skipped because estimation failed.
    pub gaps: usize,
    pub p_plus: f64,
    pub p_minus: f64,
    pub p_zero: f64,
    pub p_plus_se: f64,
    /// Traded steps whose realized return was exactly zero (counted in `p_minus`).
    pub ties: usize,
    pub mean_return: f64,
    pub mean_return_se: f64,
    /// Lower absolute semi-deviation `mean(max(0, -strategy return))`.
    pub risk: f64,
    pub risk_se: f64,
    pub risk_adjusted: f64,
    /// True when consecutive evaluation windows overlap (`h > 1`), in which
    /// case the standard errors above understate the true uncertainty.
    pub overlapping: bool,
    /// Distinct optimal lag sets used, keyed by `Ĥ` bucket.
    pub lag_sets: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub summary: BacktestSummary,
    pub records: Vec<StepRecord>,
}

impl BacktestReport {
    /// Per-step CSV `timestamp,hurst,forecast,position,realized,strategy_return`.
    pub fn write_steps_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["timestamp", "hurst", "forecast", "position", "realized", "strategy_return"])
            .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.timestamp.to_string(),
                format!("{:?}", r.hurst),
                format!("{:?}", r.forecast),
                r.position.to_string(),
                format!("{:?}", r.realized),
                format!("{:?}", r.strategy_return),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rounds lags to whole steps (minimum 1), bumping collisions to the next free step.
pub fn round_lags(lags: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(lags.len());
    for d in lags {
        let r = (d.round().max(1.0)) as usize;
        let next = out.last().map_or(r, |p| r.max(p + 1));
        out.push(next);
    }
    out
}

fn naive_lags(h: usize, n: usize) -> Vec<usize> {
    (1..=n).map(|i| i * h).collect()
}

fn bucket_of(h: f64) -> i64 {
    (h / LAG_CACHE_RESOLUTION).round() as i64
}

fn optimal_integer_lags(hurst: f64, cfg: &BacktestConfig) -> Vec<usize> {
    let spec = FbmSpec::standard(hurst).expect("bucket centre is a valid Hurst exponent");
    match optimize_lags(&spec, cfg.horizon_steps as f64, cfg.n_lags, Execution::Sequential) {
        Ok(opt) => round_lags(&opt.lags),
        Err(e) => {
            debug!("lag optimisation at H = {hurst} failed ({e}); using naive lags");
            naive_lags(cfg.horizon_steps, cfg.n_lags)
        }
    }
}

struct StepParams {
    hurst: f64,
    sigma: f64,
}

enum StepOutcome {
    Gap,
    Warmup,
    Done(StepRecord),
}

pub fn run_backtest(series: &[SeriesRecord], cfg: &BacktestConfig, exec: Execution) -> Result<BacktestReport> {
    cfg.validate()?;
    let values: Vec<f64> = series.iter().map(|r| r.value).collect();
    let h = cfg.horizon_steps;
    let first = if cfg.known_params.is_some() { 0 } else { cfg.estimator.window };
    let needed = first + h + 1;
    if values.len() < needed {
        return Err(Error::InsufficientData { needed, got: values.len() });
    }
    let last = values.len() - h;
    let count = last - first;

    let params: Vec<Option<StepParams>> = match &cfg.known_params {
        Some(spec) => (0..count)
            .map(|_| Some(StepParams { hurst: spec.hurst(), sigma: spec.sigma() }))
            .collect(),
        None => exec.map(count, |k| {
            let t = first + k;
            match estimate_hurst(&values, &cfg.estimator, t) {
                Ok(e) => Some(StepParams { hurst: e.hurst, sigma: e.sigma }),
                Err(err) => {
                    debug!("step {t}: {err}");
                    None
                }
            }
        }),
    };

    let mut lag_table: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    if cfg.lag_mode == LagMode::Optimal {
        let buckets: Vec<i64> = {
            let mut b: Vec<i64> = params.iter().flatten().map(|p| bucket_of(clamp_hurst(p.hurst))).collect();
            b.sort_unstable();
            b.dedup();
            b
        };
        let solved = exec.map(buckets.len(), |i| {
            optimal_integer_lags(clamp_hurst(buckets[i] as f64 * LAG_CACHE_RESOLUTION), cfg)
        });
        lag_table = buckets.into_iter().zip(solved).collect();
    }
    let fixed_lags = naive_lags(h, cfg.n_lags);

    let outcomes = exec.map(count, |k| -> Result<StepOutcome> {
        let t = first + k;
        let Some(p) = &params[k] else {
            return Ok(StepOutcome::Gap);
        };
        let hurst = clamp_hurst(p.hurst);
        let lags = match cfg.lag_mode {
            LagMode::Naive => &fixed_lags,
            LagMode::Optimal => &lag_table[&bucket_of(hurst)],
        };
        let max_lag = *lags.last().expect("n_lags >= 1");
        if t < max_lag {
            return Ok(StepOutcome::Warmup);
        }
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Ok(StepOutcome::Gap);
        }
        let spec = FbmSpec::new(hurst, p.sigma)?;
        let lag_f: Vec<f64> = lags.iter().map(|&d| d as f64).collect();
        let structure = LagStructure::anchored(h as f64, &lag_f)?;
        let solution = solve_predictor(&spec, &structure)?;
        let observed: Vec<f64> = std::iter::once(0)
            .chain(lags.iter().copied())
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| values[t - w[0]] - values[t - w[1]])
            .collect();
        let forecast = solution.forecast(&observed)?;
        let theta = match cfg.threshold_mode {
            ThresholdMode::Optimal if solution.a > 0.0 => optimal_threshold(&solution, cfg.lambda)?.0,
            _ => 0.0,
        };
        let position: i8 = if forecast != 0.0 && forecast.abs() >= theta {
            if forecast > 0.0 { 1 } else { -1 }
        } else {
            0
        };
        let realized = values[t + h] - values[t];
        Ok(StepOutcome::Done(StepRecord {
            timestamp: series[t].timestamp.clone(),
            hurst: p.hurst,
            sigma: p.sigma,
            forecast,
            theta,
            position,
            realized,
            strategy_return: f64::from(position) * realized,
        }))
    });

    let mut records = Vec::new();
    let mut gaps = 0;
    for o in outcomes {
        match o? {
            StepOutcome::Gap => gaps += 1,
            StepOutcome::Warmup => {}
            StepOutcome::Done(r) => records.push(r),
        }
    }
    if records.is_empty() {
        return Err(Error::InsufficientData { needed: needed + 1, got: values.len() });
    }
    let summary = summarize(series, cfg, &records, gaps, lag_table.into_values().collect());
    Ok(BacktestReport { summary, records })
}

fn summarize(
    series: &[SeriesRecord],
    cfg: &BacktestConfig,
    records: &[StepRecord],
    gaps: usize,
    mut lag_sets: Vec<Vec<usize>>,
) -> BacktestSummary {
    let n = records.len();
    let nf = n as f64;
    let (mut plus, mut minus, mut zero, mut ties) = (0usize, 0usize, 0usize, 0usize);
    let (mut ret_sum, mut ret_sq, mut loss_sum, mut loss_sq) = (0.0, 0.0, 0.0, 0.0);
    for r in records {
        if r.position == 0 {
            zero += 1;
        } else if r.strategy_return > 0.0 {
            plus += 1;
        } else {
            minus += 1;
            if r.realized == 0.0 {
                ties += 1;
            }
        }
        let loss = (-r.strategy_return).max(0.0);
        ret_sum += r.strategy_return;
        ret_sq += r.strategy_return * r.strategy_return;
        loss_sum += loss;
        loss_sq += loss * loss;
    }
    let se = |sum: f64, sq: f64| {
        let mean = sum / nf;
        let var = if n > 1 { ((sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
        (mean, (var / nf).sqrt())
    };
    let (mean_return, mean_return_se) = se(ret_sum, ret_sq);
    let (risk, risk_se) = se(loss_sum, loss_sq);
    let p_plus = plus as f64 / nf;
    lag_sets.dedup();
    BacktestSummary {
        config: cfg.clone(),
        series_digest: series_digest(series),
        series_len: series.len(),
        steps: n,
        gaps,
        p_plus,
        p_minus: minus as f64 / nf,
        p_zero: zero as f64 / nf,
        p_plus_se: (p_plus * (1.0 - p_plus) / nf).sqrt(),
        ties,
        mean_return,
        mean_return_se,
        risk,
        risk_se,
        risk_adjusted: mean_return - cfg.lambda * risk,
        overlapping: cfg.horizon_steps > 1,
        lag_sets,
    }
}

pub const COMPARISON_COLUMNS: [&str; 6] = ["mean_return", "risk", "risk_adjusted", "p_plus", "p_minus", "p_zero"];

/// Side-by-side summary of several backtests on the same series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub values: Vec<f64>,
}

impl ComparisonTable {
    /// Same table with columns in lexicographic order.
    pub fn canonical(&self) -> Self {
        let mut order: Vec<usize> = (0..self.columns.len()).collect();
        order.sort_by(|&i, &j| self.columns[i].cmp(&self.columns[j]));
        Self {
            columns: order.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| ComparisonRow { label: r.label.clone(), values: order.iter().map(|&i| r.values[i]).collect() })
                .collect(),
        }
    }

    /// Moves the named columns to the given order; unknown names are an error.
    pub fn with_columns(&self, names: &[&str]) -> Result<Self> {
        let order: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown column `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            columns: names.iter().map(|n| n.to_string()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| ComparisonRow { label: r.label.clone(), values: order.iter().map(|&i| r.values[i]).collect() })
                .collect(),
        })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }
}

pub fn compare_reports(reports: &[&BacktestSummary]) -> Result<ComparisonTable> {
    if let Some(first) = reports.first() {
        for r in &reports[1..] {
            if r.series_digest != first.series_digest || r.config.horizon_steps != first.config.horizon_steps {
                return Err(Error::MismatchedSeries);
            }
        }
    }
    Ok(ComparisonTable {
        columns: COMPARISON_COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows: reports
            .iter()
            .map(|r| ComparisonRow {
                label: r.config.label(),
                values: vec![r.mean_return, r.risk, r.risk_adjusted, r.p_plus, r.p_minus, r.p_zero],
            })
            .collect(),
    })
}
