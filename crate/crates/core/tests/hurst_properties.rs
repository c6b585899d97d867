use proptest::prelude::*;

use fbm_forecast::fbm::{simulate_fgn, simulate_uniform_path};
use fbm_forecast::hurst::{estimate_hurst, rolling_hurst};
use fbm_forecast::{EstimatorConfig, Execution, FbmSpec};

fn walk(steps: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(steps.iter().scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        }))
        .collect()
}

proptest! {
    #[test]
    fn swapping_durations_is_exact(steps in prop::collection::vec(-1.0f64..1.0, 80..200), tau2 in 2usize..8) {
        let series = walk(&steps);
        let a = EstimatorConfig::new(64, 1, tau2).unwrap();
        let b = EstimatorConfig::new(64, tau2, 1).unwrap();
        let t = series.len() - 1;
        let ea = estimate_hurst(&series, &a, t).unwrap();
        let eb = estimate_hurst(&series, &b, t).unwrap();
        prop_assert_eq!(ea.hurst, eb.hurst);
    }

    #[test]
    fn scale_and_shift_invariance(
        steps in prop::collection::vec(-1.0f64..1.0, 80..200),
        scale in 1e-3f64..1e3,
        shift in -10.0f64..10.0,
    ) {
        let series = walk(&steps);
        let cfg = EstimatorConfig::new(64, 1, 3).unwrap();
        let t = series.len() - 1;
        let base = estimate_hurst(&series, &cfg, t).unwrap();
        let scaled: Vec<f64> = series.iter().map(|v| v * scale).collect();
        let shifted: Vec<f64> = series.iter().map(|v| v + shift).collect();
        let es = estimate_hurst(&scaled, &cfg, t).unwrap();
        let eh = estimate_hurst(&shifted, &cfg, t).unwrap();
        prop_assert!((es.hurst - base.hurst).abs() < 1e-12);
        prop_assert!((es.sigma / base.sigma - scale).abs() < 1e-9 * scale);
        prop_assert!((eh.hurst - base.hurst).abs() < 1e-9);
    }
}

#[test]
fn recovers_rough_exponent_over_windows() {
    let spec = FbmSpec::standard(0.3).unwrap();
    let path = simulate_uniform_path(&spec, 504 + 199 * 504, 1.0, 3).unwrap();
    let cfg = EstimatorConfig::default();
    // 200 disjoint windows.
    let estimates: Vec<f64> = (0..200)
        .map(|k| estimate_hurst(&path, &cfg, 504 * (k + 1)).unwrap().hurst)
        .collect();
    let mean = estimates.iter().sum::<f64>() / 200.0;
    assert!((mean - 0.3).abs() < 0.03, "{mean}");
}

#[test]
fn volatility_estimate_tracks_sigma() {
    let spec = FbmSpec::new(0.65, 0.02).unwrap();
    let path = simulate_uniform_path(&spec, 50_000, 1.0, 8).unwrap();
    let rolling = rolling_hurst(&path, &EstimatorConfig::default(), Execution::Parallel).unwrap();
    let mean_sigma = rolling.estimates.iter().map(|e| e.sigma).sum::<f64>() / rolling.estimates.len() as f64;
    assert!((mean_sigma / 0.02 - 1.0).abs() < 0.1, "{mean_sigma}");
    assert!(rolling.gaps.is_empty());
}

#[test]
fn larger_windows_reduce_dispersion() {
    let spec = FbmSpec::standard(0.15).unwrap();
    let std_of = |window: usize| {
        let cfg = EstimatorConfig::new(window, 1, 2).unwrap();
        let est: Vec<f64> = (0..60)
            .map(|k| {
                let path = simulate_uniform_path(&spec, window, 1.0, 1000 + k).unwrap();
                estimate_hurst(&path, &cfg, window).unwrap().hurst
            })
            .collect();
        let m = est.iter().sum::<f64>() / est.len() as f64;
        (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
    };
    let short = std_of(504);
    let long = std_of(2016);
    assert!(long < short, "{long} >= {short}");
}

#[test]
fn spliced_regimes_move_between_levels() {
    let rough = simulate_fgn(&FbmSpec::standard(0.2).unwrap(), 20_000, 1.0, 1).unwrap();
    let smooth = simulate_fgn(&FbmSpec::standard(0.7).unwrap(), 20_000, 1.0, 2).unwrap();
    let steps: Vec<f64> = rough.into_iter().chain(smooth).collect();
    let path = walk(&steps);
    let cfg = EstimatorConfig::default();
    let rolling = rolling_hurst(&path, &cfg, Execution::Parallel).unwrap();
    let at = |i: usize| rolling.estimates[i - cfg.window].hurst;
    let block = |from: usize, len: usize| (from..from + len).map(at).sum::<f64>() / len as f64;

    let before = block(5_000, 10_000);
    let after = block(30_000, 10_000);
    assert!((before - 0.2).abs() < 0.03, "{before}");
    assert!((after - 0.7).abs() < 0.03, "{after}");
    // Windows straddling the splice, in four blocks of 126.
    let transition: Vec<f64> = (0..4).map(|k| block(20_000 + 126 * k, 126)).collect();
    assert!(transition.windows(2).all(|w| w[1] > w[0]), "{transition:?}");
    assert!(transition[0] > before);
}
