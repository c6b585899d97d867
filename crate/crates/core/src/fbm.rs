//! Covariance algebra of the fBm and exact simulation of discrete paths.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};

/// Hurst exponent and volatility parameter of an fBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFbmSpec")]
pub struct FbmSpec {
    hurst: f64,
    sigma: f64,
}

#[derive(Deserialize)]
struct RawFbmSpec {
    hurst: f64,
    sigma: f64,
}

impl TryFrom<RawFbmSpec> for FbmSpec {
    type Error = Error;
    fn try_from(raw: RawFbmSpec) -> Result<Self> {
        FbmSpec::new(raw.hurst, raw.sigma)
    }
}

impl FbmSpec {
    pub fn new(hurst: f64, sigma: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "hurst must lie in (0, 1), got {hurst}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { hurst, sigma })
    }

    /// Standard fBm (σ = 1).
    pub fn standard(hurst: f64) -> Result<Self> {
        Self::new(hurst, 1.0)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn pow2h(&self, x: f64) -> f64 {
        x.abs().powf(2.0 * self.hurst)
    }

    /// `σ² |dt|^{2H}`, the variance of an increment of duration `dt`.
    pub fn increment_variance(&self, dt: f64) -> f64 {
        self.sigma * self.sigma * self.pow2h(dt)
    }

    /// `E[X_t X_s]`.
    pub fn process_covariance(&self, t: f64, s: f64) -> f64 {
        0.5 * self.sigma * self.sigma * (self.pow2h(t) + self.pow2h(s) - self.pow2h(t - s))
    }

    /// `E[(X_t - X_s)(X_v - X_u)]` for the intervals `[s, t]` and `[u, v]`.
    pub fn increment_covariance(&self, s: f64, t: f64, u: f64, v: f64) -> Result<f64> {
        if s > t || u > v {
            return Err(Error::InvalidParameter(format!(
                "intervals must be ordered, got [{s}, {t}] and [{u}, {v}]"
            )));
        }
        Ok(self.increment_covariance_unchecked(s, t, u, v))
    }

    pub(crate) fn increment_covariance_unchecked(&self, s: f64, t: f64, u: f64, v: f64) -> f64 {
        0.5 * self.sigma
            * self.sigma
            * (self.pow2h(u - t) + self.pow2h(v - s) - self.pow2h(v - t) - self.pow2h(u - s))
    }

    /// Autocovariance at lag `k` of fractional Gaussian noise sampled every `step`.
    pub fn fgn_autocovariance(&self, step: f64, k: usize) -> f64 {
        let k = k as f64;
        0.5 * self.increment_variance(step)
            * (self.pow2h(k + 1.0) - 2.0 * self.pow2h(k) + self.pow2h(k - 1.0))
    }
}

/// Strictly increasing, finite, non-negative observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidParameter("time grid is empty".into()));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid times must be finite and non-negative, got {t}"
            )));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!(
                "grid times must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self { times })
    }

    /// `0, step, 2·step, …, points·step`.
    pub fn uniform(step: f64, points: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
        }
        Self::new((0..=points).map(|i| i as f64 * step).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Simulated paths stored row-major: one row per path, one column per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePaths {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SamplePaths {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn count(&self) -> usize {
        if self.times.is_empty() {
            0
        } else {
            self.values.len() / self.times.len()
        }
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let m = self.times.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.times.len())
    }

    /// Values of every path at grid column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.paths().map(|p| p[j]).collect()
    }
}

/// Lower Cholesky factor of a symmetric matrix, with one jitter retry of
/// `1e-12 · max(diag)` on failure.
pub(crate) fn cholesky_with_jitter(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = cov.nrows();
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let max_diag = cov.diagonal().iter().cloned().fold(0.0, f64::max);
    let jitter = 1e-12 * max_diag;
    log::warn!("cholesky failed on {dim}x{dim} covariance; retrying with jitter {jitter:e}");
    let mut jittered = cov;
    for i in 0..dim {
        jittered[(i, i)] += jitter;
    }
    jittered
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite { dim })
}

/// Exact simulation of `count` paths on `grid` through the Cholesky factor of
/// the increment covariance matrix. Deterministic given `seed`, whatever the
/// execution mode.
pub fn simulate_path(
    spec: &FbmSpec,
    grid: &TimeGrid,
    seed: u64,
    count: usize,
    exec: Execution,
) -> Result<SamplePaths> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    let times = grid.times().to_vec();
    // Increments are taken between consecutive positive times, anchored at X_0 = 0.
    let positive: Vec<f64> = times.iter().copied().filter(|t| *t > 0.0).collect();
    let m = positive.len();
    let starts: Vec<f64> = std::iter::once(0.0).chain(positive.iter().copied()).take(m).collect();
    let cov = DMatrix::from_fn(m, m, |i, j| {
        spec.increment_covariance_unchecked(starts[i], positive[i], starts[j], positive[j])
    });
    let lower = if m > 0 { cholesky_with_jitter(cov)? } else { DMatrix::zeros(0, 0) };
    let offset = times.len() - m;

    let rows = exec.map(count, |p| {
        let mut rng = stream_rng(seed, p as u64);
        let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut row = vec![0.0; times.len()];
        let mut level = 0.0;
        for i in 0..m {
            let mut incr = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                incr += lower[(i, k)] * zk;
            }
            level += incr;
            row[offset + i] = level;
        }
        row
    });
    Ok(SamplePaths { times, values: rows.concat() })
}

/// Exact fractional Gaussian noise of length `n` with sampling interval
/// `step`, by circulant embedding of the fGn autocovariance (Davies–Harte).
/// Cost is `O(n log n)`, which makes long uniform paths feasible.
pub fn simulate_fgn(spec: &FbmSpec, n: usize, step: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let half = n.next_power_of_two().max(2);
    let size = 2 * half;
    let mut row: Vec<Complex64> = (0..size)
        .map(|k| {
            let lag = if k <= half { k } else { size - k };
            Complex64::new(spec.fgn_autocovariance(step, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    fft.process(&mut row);

    let max_eig = row.iter().map(|c| c.re).fold(0.0, f64::max);
    let mut rng = stream_rng(seed, u64::MAX);
    let mut buf: Vec<Complex64> = Vec::with_capacity(size);
    for c in &row {
        let mut eig = c.re;
        if eig < 0.0 {
            if eig < -1e-10 * max_eig {
                return Err(Error::NotPositiveDefinite { dim: size });
            }
            eig = 0.0;
        }
        let scale = (eig / size as f64).sqrt();
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        buf.push(Complex64::new(scale * re, scale * im));
    }
    fft.process(&mut buf);
    Ok(buf.iter().take(n).map(|c| c.re).collect())
}

/// A single fBm path `X_0 = 0, X_step, …, X_{n·step}` built from
/// [`simulate_fgn`].
pub fn simulate_uniform_path(spec: &FbmSpec, n: usize, step: f64, seed: u64) -> Result<Vec<f64>> {
    let noise = simulate_fgn(spec, n, step, seed)?;
    let mut path = Vec::with_capacity(n + 1);
    let mut level = 0.0;
    path.push(level);
    for x in noise {
        level += x;
        path.push(level);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn spec_validation() {
        assert!(FbmSpec::new(0.0, 1.0).is_err());
        assert!(FbmSpec::new(1.0, 1.0).is_err());
        assert!(FbmSpec::new(0.5, 0.0).is_err());
        assert!(FbmSpec::new(f64::NAN, 1.0).is_err());
        assert!(FbmSpec::new(0.3, 2.0).is_ok());
    }

    #[test]
    fn spec_deserialization_validates() {
        let ok: FbmSpec = serde_json::from_str(r#"{"hurst":0.3,"sigma":1.5}"#).unwrap();
        assert_eq!(ok.hurst(), 0.3);
        assert!(serde_json::from_str::<FbmSpec>(r#"{"hurst":1.3,"sigma":1.5}"#).is_err());
    }

    #[test]
    fn process_covariance_values() {
        let bm = FbmSpec::standard(0.5).unwrap();
        assert_eq!(bm.process_covariance(1.0, 1.0), 1.0);
        let s = FbmSpec::new(0.3, 2.0).unwrap();
        assert_eq!(s.process_covariance(0.0, 3.7), 0.0);
        let s = FbmSpec::standard(0.65).unwrap();
        assert_abs_diff_eq!(s.process_covariance(2.0, 1.0), 0.5 * 2f64.powf(1.3), epsilon = 1e-15);
        assert_abs_diff_eq!(s.process_covariance(2.0, 1.0), 1.231_144_413_3, epsilon = 1e-10);
    }

    #[test]
    fn increment_covariance_values() {
        let bm = FbmSpec::standard(0.5).unwrap();
        assert_abs_diff_eq!(bm.increment_covariance(0.0, 1.0, 1.0, 2.0).unwrap(), 0.0, epsilon = 1e-15);
        let s = FbmSpec::standard(0.65).unwrap();
        let c = s.increment_covariance(0.0, 1.0, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(c, 0.5 * (2f64.powf(1.3) - 2.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c, 0.231_144_413_3, epsilon = 1e-10);
        assert_abs_diff_eq!(s.increment_covariance(0.0, 1.0, 0.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(s.increment_covariance(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(s.increment_covariance(0.0, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn fgn_autocovariance_matches_increments() {
        let s = FbmSpec::new(0.27, 1.3).unwrap();
        for k in 0..6 {
            let direct = s
                .increment_covariance(0.0, 0.5, 0.5 * k as f64, 0.5 * (k + 1) as f64)
                .unwrap();
            assert_abs_diff_eq!(s.fgn_autocovariance(0.5, k), direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::INFINITY]).is_err());
        assert!(TimeGrid::new(vec![-1.0, 1.0]).is_err());
        assert_eq!(TimeGrid::uniform(0.5, 4).unwrap().times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn simulation_is_deterministic_and_mode_independent() {
        let s = FbmSpec::new(0.7, 0.4).unwrap();
        let grid = TimeGrid::new(vec![0.0, 0.3, 1.0, 2.5]).unwrap();
        let a = simulate_path(&s, &grid, 42, 50, Execution::Sequential).unwrap();
        let b = simulate_path(&s, &grid, 42, 50, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&s, &grid, 43, 50, Execution::Sequential).unwrap();
        assert_ne!(a, c);
        assert!(a.paths().all(|p| p[0] == 0.0));
        assert_eq!(a.count(), 50);
    }

    #[test]
    fn grid_without_origin_starts_from_zero_anchor() {
        let s = FbmSpec::standard(0.5).unwrap();
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        let paths = simulate_path(&s, &grid, 1, 40_000, Execution::Parallel).unwrap();
        let v1 = variance(&paths.column(0));
        assert!((v1 - 1.0).abs() < 0.03, "{v1}");
    }

    #[test]
    fn brownian_variance() {
        let s = FbmSpec::standard(0.5).unwrap();
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let paths = simulate_path(&s, &grid, 11, 100_000, Execution::Parallel).unwrap();
        let v = variance(&paths.column(1));
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn rough_variance_law() {
        let s = FbmSpec::standard(0.3).unwrap();
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let paths = simulate_path(&s, &grid, 12, 100_000, Execution::Parallel).unwrap();
        let v = variance(&paths.column(2));
        let expected = 2f64.powf(0.6);
        assert!((v / expected - 1.0).abs() < 0.02, "{v} vs {expected}");
    }

    #[test]
    fn self_similarity_variance_ratio() {
        let s = FbmSpec::standard(0.72).unwrap();
        let grid = TimeGrid::new(vec![0.0, 1.0, 3.0]).unwrap();
        let paths = simulate_path(&s, &grid, 5, 100_000, Execution::Parallel).unwrap();
        let ratio = variance(&paths.column(2)) / variance(&paths.column(1));
        let expected = 3f64.powf(2.0 * 0.72);
        assert!((ratio / expected - 1.0).abs() < 0.03, "{ratio} vs {expected}");
    }

    #[test]
    fn stationary_increments() {
        let s = FbmSpec::standard(0.25).unwrap();
        let grid = TimeGrid::uniform(0.5, 8).unwrap();
        let paths = simulate_path(&s, &grid, 9, 100_000, Execution::Parallel).unwrap();
        let early: Vec<f64> = paths.paths().map(|p| p[3] - p[1]).collect();
        let late: Vec<f64> = paths.paths().map(|p| p[8] - p[6]).collect();
        let (ve, vl) = (variance(&early), variance(&late));
        let expected = s.increment_variance(1.0);
        assert!((ve / expected - 1.0).abs() < 0.02);
        assert!((vl / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn monte_carlo_increment_covariance() {
        let s = FbmSpec::standard(0.65).unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let paths = simulate_path(&s, &grid, 3, 400_000, Execution::Parallel).unwrap();
        let n = paths.count() as f64;
        let cov = paths.paths().map(|p| (p[1] - p[0]) * (p[2] - p[1])).sum::<f64>() / n;
        // standard error of a product of unit-variance normals is ~ sqrt(1 + c²)/sqrt(n)
        assert!((cov - 0.231_144_413).abs() < 4.0 * (1.06 / n).sqrt(), "{cov}");
    }

    #[test]
    fn circulant_fgn_autocovariance() {
        let s = FbmSpec::new(0.15, 1.0).unwrap();
        let n = 1 << 17;
        let x = simulate_fgn(&s, n, 1.0, 99).unwrap();
        for k in 0..4 {
            let c = x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / (n - k) as f64;
            let expected = s.fgn_autocovariance(1.0, k);
            assert!((c - expected).abs() < 0.02, "lag {k}: {c} vs {expected}");
        }
    }

    #[test]
    fn circulant_path_is_deterministic() {
        let s = FbmSpec::new(0.8, 2.0).unwrap();
        let a = simulate_uniform_path(&s, 1000, 0.1, 5).unwrap();
        let b = simulate_uniform_path(&s, 1000, 0.1, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1001);
        assert_eq!(a[0], 0.0);
    }

    proptest! {
        #[test]
        fn increment_covariance_symmetric_and_diagonal(
            h in 0.01f64..0.99, sigma in 0.1f64..3.0,
            s in 0.0f64..5.0, ds in 0.01f64..5.0, u in 0.0f64..5.0, du in 0.01f64..5.0,
        ) {
            let spec = FbmSpec::new(h, sigma).unwrap();
            let c1 = spec.increment_covariance(s, s + ds, u, u + du).unwrap();
            let c2 = spec.increment_covariance(u, u + du, s, s + ds).unwrap();
            prop_assert!((c1 - c2).abs() <= 1e-12 * (1.0 + c1.abs()));
            let var = spec.increment_covariance(s, s + ds, s, s + ds).unwrap();
            let expected = sigma * sigma * ds.powf(2.0 * h);
            prop_assert!((var - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }
}
