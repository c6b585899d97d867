use std::io::Write;

use fbm_forecast::backtest::{
    compare_reports, load_series, records_from_values, run_backtest, BacktestSummary, Timestamp,
};
use fbm_forecast::fbm::simulate_uniform_path;
use fbm_forecast::{BacktestConfig, Execution, FbmSpec, LagMode, SeriesRecord, ThresholdMode};

fn synthetic(h: f64, steps: usize, seed: u64) -> Vec<SeriesRecord> {
    records_from_values(&simulate_uniform_path(&FbmSpec::standard(h).unwrap(), steps, 1.0, seed).unwrap())
}

fn known(h: f64) -> BacktestConfig {
    BacktestConfig { known_params: Some(FbmSpec::standard(h).unwrap()), ..Default::default() }
}

fn counts_partition(s: &BacktestSummary) {
    let n = s.steps as f64;
    let (p, m, z) = ((s.p_plus * n).round(), (s.p_minus * n).round(), (s.p_zero * n).round());
    assert_eq!(p + m + z, n);
    assert!((s.p_plus + s.p_minus + s.p_zero - 1.0).abs() < 1e-15);
}

#[test]
fn brownian_motion_is_a_coin_flip() {
    let series = synthetic(0.5, 60_000, 21);
    let report = run_backtest(&series, &BacktestConfig::default(), Execution::Parallel).unwrap();
    let s = &report.summary;
    counts_partition(s);
    assert_eq!(s.p_zero, 0.0);
    assert!((s.p_plus - 0.5).abs() < 3.0 * s.p_plus_se, "{} ± {}", s.p_plus, s.p_plus_se);
}

#[test]
fn zero_risk_aversion_matches_zero_threshold() {
    let series = synthetic(0.65, 5_000, 3);
    let zero = run_backtest(&series, &BacktestConfig::default(), Execution::Parallel).unwrap();
    let cfg = BacktestConfig { threshold_mode: ThresholdMode::Optimal, lambda: 0.0, ..Default::default() };
    let opt = run_backtest(&series, &cfg, Execution::Parallel).unwrap();
    let positions = |r: &fbm_forecast::BacktestReport| r.records.iter().map(|x| x.position).collect::<Vec<_>>();
    assert_eq!(positions(&zero), positions(&opt));
    assert!(opt.records.iter().all(|r| r.theta == 0.0));
}

#[test]
fn reports_are_deterministic() {
    let series = synthetic(0.3, 4_000, 9);
    let cfg = BacktestConfig {
        n_lags: 2,
        lag_mode: LagMode::Optimal,
        threshold_mode: ThresholdMode::Optimal,
        lambda: 0.3,
        seed: Some(9),
        ..Default::default()
    };
    let a = run_backtest(&series, &cfg, Execution::Sequential).unwrap();
    let b = run_backtest(&series, &cfg, Execution::Parallel).unwrap();
    let c = run_backtest(&series, &cfg, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(b, c);
    assert_eq!(serde_json::to_string(&a.summary).unwrap(), serde_json::to_string(&c.summary).unwrap());
    assert!(!a.summary.lag_sets.is_empty());
}

#[test]
fn summary_json_round_trips() {
    let series = synthetic(0.65, 2_000, 4);
    let cfg = BacktestConfig { horizon_steps: 3, n_lags: 2, ..known(0.65) };
    let report = run_backtest(&series, &cfg, Execution::Parallel).unwrap();
    let json = serde_json::to_string(&report.summary).unwrap();
    let back: BacktestSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report.summary);
    assert!(report.summary.overlapping);
    let full: fbm_forecast::BacktestReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(full, report);
}

#[test]
fn optimal_threshold_lowers_risk() {
    let series = synthetic(0.65, 40_000, 12);
    let zero = run_backtest(&series, &known(0.65), Execution::Parallel).unwrap();
    let cfg = BacktestConfig { threshold_mode: ThresholdMode::Optimal, lambda: 0.1, ..known(0.65) };
    let opt = run_backtest(&series, &cfg, Execution::Parallel).unwrap();
    let table = compare_reports(&[&zero.summary, &opt.summary]).unwrap();
    let risk = table.column("risk").unwrap();
    assert!(risk[1] < risk[0], "{risk:?}");
    assert!(opt.summary.p_zero > 0.0);
    counts_partition(&opt.summary);
}

#[test]
fn estimated_parameters_still_beat_a_coin_flip() {
    for (h, seed) in [(0.15, 31), (0.65, 32)] {
        let series = synthetic(h, 100_000, seed);
        let report = run_backtest(&series, &BacktestConfig::default(), Execution::Parallel).unwrap();
        let s = &report.summary;
        assert!(s.p_plus - 0.5 >= 2.0 * s.p_plus_se, "H={h}: {} ± {}", s.p_plus, s.p_plus_se);
        assert_eq!(s.gaps, 0);
    }
}

#[test]
fn file_input_and_step_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let values = simulate_uniform_path(&FbmSpec::standard(0.65).unwrap(), 700, 1.0, 5).unwrap();
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "timestamp,value").unwrap();
    for (i, v) in values.iter().enumerate() {
        writeln!(f, "2024-01-01T{:02}:{:02}:00Z,{v}", i / 60, i % 60).unwrap();
    }
    drop(f);
    let series = load_series(&path).unwrap();
    assert_eq!(series.len(), 701);
    assert!(matches!(series[0].timestamp, Timestamp::Iso(_)));

    let report = run_backtest(&series, &BacktestConfig::default(), Execution::Parallel).unwrap();
    assert_eq!(report.summary.steps, 701 - 504 - 1);
    assert_eq!(report.records[0].timestamp, series[504].timestamp);
    let mut buf = Vec::new();
    report.write_steps_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "timestamp,hurst,forecast,position,realized,strategy_return");
    assert_eq!(lines.count(), report.summary.steps);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_series(std::path::Path::new("/nonexistent/series.csv")).unwrap_err();
    assert!(matches!(err, fbm_forecast::Error::Io(_)));
}
