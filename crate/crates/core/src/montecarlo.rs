//! Monte Carlo counterparts of the closed-form metrics.
//!
//! Each trial draws the lagged returns and the realized return jointly from
//! their exact Gaussian law (Cholesky factor of the increment covariance),
//! applies the predictor weights and the threshold rule, and records the
//! outcome. None of this goes through the `a`, `b` representation, so the
//! estimates are an independent check on it.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::fbm::{cholesky_with_jitter, FbmSpec};
use crate::predictor::{solve_predictor, LagStructure};

/// Trials per RNG stream.
pub const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    trials: u64,
    plus: u64,
    minus: u64,
    zero: u64,
    ret_sum: f64,
    ret_sq: f64,
    loss_sum: f64,
    loss_sq: f64,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        self.trials += o.trials;
        self.plus += o.plus;
        self.minus += o.minus;
        self.zero += o.zero;
        self.ret_sum += o.ret_sum;
        self.ret_sq += o.ret_sq;
        self.loss_sum += o.loss_sum;
        self.loss_sq += o.loss_sq;
    }
}

/// Empirical metrics at one threshold, each with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub theta: f64,
    pub trials: u64,
    pub p_plus: f64,
    pub p_plus_se: f64,
    pub p_minus: f64,
    pub p_minus_se: f64,
    pub p_zero: f64,
    pub p_zero_se: f64,
    pub mean_return: f64,
    pub mean_return_se: f64,
    /// Empirical lower semi-deviation `E[max(0, -R_strat)]`.
    pub mean_loss: f64,
    pub mean_loss_se: f64,
}

fn proportion(count: u64, n: u64) -> (f64, f64) {
    let p = count as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn mean_and_se(sum: f64, sq: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

impl McEstimate {
    fn from_tally(theta: f64, t: &Tally) -> Self {
        let n = t.trials;
        let (p_plus, p_plus_se) = proportion(t.plus, n);
        let (p_minus, p_minus_se) = proportion(t.minus, n);
        let (p_zero, p_zero_se) = proportion(t.zero, n);
        let (mean_return, mean_return_se) = mean_and_se(t.ret_sum, t.ret_sq, n);
        let (mean_loss, mean_loss_se) = mean_and_se(t.loss_sum, t.loss_sq, n);
        Self {
            theta,
            trials: n,
            p_plus,
            p_plus_se,
            p_minus,
            p_minus_se,
            p_zero,
            p_zero_se,
            mean_return,
            mean_return_se,
            mean_loss,
            mean_loss_se,
        }
    }
}

/// Simulates `trials` joint draws of (lagged returns, realized return) and
/// evaluates the thresholded strategy at every `theta`. Deterministic in
/// `seed` regardless of `exec`.
pub fn simulate_strategy(
    spec: &FbmSpec,
    lags: &LagStructure,
    thetas: &[f64],
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<McEstimate>> {
    if trials < 2 {
        return Err(Error::InvalidParameter("at least two trials are required".into()));
    }
    if thetas.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter(format!("thresholds must be non-negative, got {thetas:?}")));
    }
    let solution = solve_predictor(spec, lags)?;
    let n = lags.n();
    let d = lags.lags();
    // Intervals relative to t = 0: lagged returns first, realized return last.
    let mut intervals: Vec<(f64, f64)> = (1..=n).map(|i| (-d[i], -d[i - 1])).collect();
    intervals.push((0.0, lags.horizon()));
    let cov = DMatrix::from_fn(n + 1, n + 1, |i, j| {
        let (s, t) = intervals[i];
        let (u, v) = intervals[j];
        spec.increment_covariance_unchecked(s, t, u, v)
    });
    let lower = cholesky_with_jitter(cov)?;
    let weights = &solution.weights;

    let chunks = trials.div_ceil(CHUNK as u64) as usize;
    let tallies = exec.map(chunks, |c| {
        let start = c as u64 * CHUNK as u64;
        let count = (trials - start).min(CHUNK as u64);
        let mut rng = stream_rng(seed, c as u64);
        let mut tallies = vec![Tally::default(); thetas.len()];
        let mut z = vec![0.0; n + 1];
        let mut x = vec![0.0; n + 1];
        for _ in 0..count {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for i in 0..=n {
                x[i] = (0..=i).map(|k| lower[(i, k)] * z[k]).sum();
            }
            let forecast: f64 = weights.iter().zip(&x[..n]).map(|(w, r)| w * r).sum();
            let realized = x[n];
            for (tally, theta) in tallies.iter_mut().zip(thetas) {
                tally.trials += 1;
                let position = if forecast.abs() >= *theta && forecast != 0.0 {
                    forecast.signum()
                } else {
                    0.0
                };
                if position == 0.0 {
                    tally.zero += 1;
                } else if position * realized > 0.0 {
                    tally.plus += 1;
                } else {
                    tally.minus += 1;
                }
                let ret = position * realized;
                let loss = (-ret).max(0.0);
                tally.ret_sum += ret;
                tally.ret_sq += ret * ret;
                tally.loss_sum += loss;
                tally.loss_sq += loss * loss;
            }
        }
        tallies
    });

    let mut total = vec![Tally::default(); thetas.len()];
    for chunk in &tallies {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    Ok(thetas
        .iter()
        .zip(&total)
        .map(|(theta, t)| McEstimate::from_tally(*theta, t))
        .collect())
}

/// Empirical non-conditional hit ratio (the `θ = 0` share of good forecasts).
pub fn empirical_hit_ratio(
    spec: &FbmSpec,
    lags: &LagStructure,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    Ok(simulate_strategy(spec, lags, &[0.0], trials, seed, exec)?[0])
}
