//! MSE-optimal linear predictor of a future fBm increment.
//!
//! The future return `R = X_{t+h} - X_t` is forecast from the vector `S` of
//! adjacent past returns `R_{t-δ_i, t-δ_{i-1}}`, `i = 1..n`, by Gaussian
//! conditioning: `R̂ = Σ_RS Σ_S⁻¹ S`. The joint law of `(R̂, R)` has the
//! Cholesky factor `[[a, 0], [a, b]]` with `a² = Σ_RS Σ_S⁻¹ Σ_RSᵀ` and
//! `a² + b² = σ² h^{2H}`; every closed-form metric downstream is a function
//! of `a` and `b` only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::FbmSpec;

/// Distance to ½ below which the Hurst exponent is treated as exactly ½.
pub const MARTINGALE_SNAP: f64 = 1e-10;

/// Condition number of `Σ_S` above which a warning is logged.
pub const CONDITION_WARNING: f64 = 1e12;

/// Forecast horizon and lag set `δ_0 < δ_1 < … < δ_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagStructure {
    horizon: f64,
    lags: Vec<f64>,
}

impl LagStructure {
    /// `lags` includes `δ_0`; at least two entries are required.
    pub fn new(horizon: f64, lags: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if lags.len() < 2 {
            return Err(Error::InvalidParameter(
                "at least one lagged return (two lag bounds) is required".into(),
            ));
        }
        if !(lags[0] >= 0.0) || lags.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lags must be finite with δ_0 >= 0, got {lags:?}"
            )));
        }
        if lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!(
                "lags must be strictly increasing, got {lags:?}"
            )));
        }
        Ok(Self { horizon, lags })
    }

    /// Lag set with `δ_0 = 0` followed by `positive_lags`.
    pub fn anchored(horizon: f64, positive_lags: &[f64]) -> Result<Self> {
        let mut lags = Vec::with_capacity(positive_lags.len() + 1);
        lags.push(0.0);
        lags.extend_from_slice(positive_lags);
        Self::new(horizon, lags)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// All bounds `δ_0..δ_n`.
    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    /// Number of lagged returns `n`.
    pub fn n(&self) -> usize {
        self.lags.len() - 1
    }

    /// Interval `[-δ_i, -δ_{i-1}]` of the i-th lagged return (1-based), relative to `t = 0`.
    fn interval(&self, i: usize) -> (f64, f64) {
        (-self.lags[i], -self.lags[i - 1])
    }

    /// Extracts the adjacent lagged returns `R_{t-δ_i, t-δ_{i-1}}` from a
    /// callable giving `X` at `t - δ`.
    pub fn observed_returns<F: Fn(f64) -> f64>(&self, value_at_lag: F) -> Vec<f64> {
        (1..=self.n())
            .map(|i| value_at_lag(self.lags[i - 1]) - value_at_lag(self.lags[i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSolution {
    /// `β_1..β_n` applied to adjacent lagged returns.
    pub weights: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub mse: f64,
    /// `σ² h^{2H} = a² + b²`.
    pub total_variance: f64,
    /// Spectral condition number of `Σ_S` (1 for the martingale case).
    pub condition_number: f64,
    /// True when H was snapped to ½ and no matrix solve was performed.
    pub martingale: bool,
}

impl PredictorSolution {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// `σ h^H`, the standard deviation of the realized return.
    pub fn return_std(&self) -> f64 {
        self.total_variance.sqrt()
    }

    /// `Σ β_i r_i` for returns ordered as `(R_{t-δ_1,t-δ_0}, …, R_{t-δ_n,t-δ_{n-1}})`.
    pub fn forecast(&self, observed_returns: &[f64]) -> Result<f64> {
        if observed_returns.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                got: observed_returns.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(observed_returns)
            .map(|(b, r)| b * r)
            .sum())
    }

    /// Weights on the anchored returns `R_{t-δ_i, t-δ_0}` that reproduce the
    /// adjacent-return forecast: `γ_i = β_i - β_{i+1}`, `γ_n = β_n`.
    pub fn anchored_weights(&self) -> Vec<f64> {
        let n = self.weights.len();
        (0..n)
            .map(|i| {
                if i + 1 < n {
                    self.weights[i] - self.weights[i + 1]
                } else {
                    self.weights[i]
                }
            })
            .collect()
    }
}

/// Weight conversion as a free function mirroring [`PredictorSolution::anchored_weights`].
pub fn adjacent_to_anchored_weights(solution: &PredictorSolution, lags: &LagStructure) -> Result<Vec<f64>> {
    if solution.n() != lags.n() {
        return Err(Error::LengthMismatch { expected: lags.n(), got: solution.n() });
    }
    Ok(solution.anchored_weights())
}

/// Covariance matrix `Σ_S` of the lagged returns and covariance vector `Σ_RS`.
pub fn lag_covariances(spec: &FbmSpec, lags: &LagStructure) -> (DMatrix<f64>, DVector<f64>) {
    let n = lags.n();
    let h = lags.horizon();
    let sigma_s = DMatrix::from_fn(n, n, |i, j| {
        let (s, t) = lags.interval(i + 1);
        let (u, v) = lags.interval(j + 1);
        spec.increment_covariance_unchecked(s, t, u, v)
    });
    let sigma_rs = DVector::from_fn(n, |i, _| {
        let (s, t) = lags.interval(i + 1);
        spec.increment_covariance_unchecked(0.0, h, s, t)
    });
    (sigma_s, sigma_rs)
}

pub fn solve_predictor(spec: &FbmSpec, lags: &LagStructure) -> Result<PredictorSolution> {
    let n = lags.n();
    let total_variance = spec.increment_variance(lags.horizon());
    if (spec.hurst() - 0.5).abs() < MARTINGALE_SNAP {
        return Ok(PredictorSolution {
            weights: vec![0.0; n],
            a: 0.0,
            b: total_variance.sqrt(),
            mse: total_variance,
            total_variance,
            condition_number: 1.0,
            martingale: true,
        });
    }

    let (sigma_s, sigma_rs) = lag_covariances(spec, lags);
    let eigen = sigma_s.clone().symmetric_eigenvalues();
    let (lo, hi) = eigen
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
    let condition_number = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition_number > CONDITION_WARNING {
        log::warn!("lag covariance is ill-conditioned (cond = {condition_number:e}) for lags {:?}", lags.lags());
    }
    let chol = sigma_s.cholesky().ok_or_else(|| {
        Error::SingularMatrix(format!("Σ_S is not positive definite for lags {:?}", lags.lags()))
    })?;
    let weights = chol.solve(&sigma_rs);
    let a2 = sigma_rs.dot(&weights).max(0.0);
    let b2 = total_variance - a2;
    if !(b2 > 0.0) || !a2.is_finite() {
        return Err(Error::SingularMatrix(format!(
            "predictor explains all variance (a² = {a2}, σ²h^2H = {total_variance})"
        )));
    }
    Ok(PredictorSolution {
        weights: weights.iter().copied().collect(),
        a: a2.sqrt(),
        b: b2.sqrt(),
        mse: b2,
        total_variance,
        condition_number,
        martingale: false,
    })
}

/// `β_1 = ½[(h/δ_1 + 1)^{2H} - (h/δ_1)^{2H} - 1]` for a single lagged return with `δ_0 = 0`.
pub fn beta1_closed_form(spec: &FbmSpec, h: f64, delta1: f64) -> Result<f64> {
    if !(h > 0.0 && delta1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "h and δ_1 must be positive, got {h} and {delta1}"
        )));
    }
    let r = h / delta1;
    let p = 2.0 * spec.hurst();
    Ok(0.5 * ((r + 1.0).powf(p) - r.powf(p) - 1.0))
}
