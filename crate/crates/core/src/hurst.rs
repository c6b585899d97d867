//! Rolling variance-ratio estimator of the Hurst exponent.
//!
//! Over a trailing window of `T` observations ending at `t`, with
//! `S_k = Σ_{i=0}^{T-τ_k} (v_{t-i} - v_{t-i-τ_k})²`,
//!
//! ```text
//! Ĥ_t = [ln((T-τ_2) S_1) - ln((T-τ_1) S_2)] / (2 (ln τ_1 - ln τ_2))
//! ```
//!
//! The volatility `σ̂` is read off the same window as
//! `√(mean squared τ_1-increment / τ_1^{2Ĥ})`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Downstream predictors are built with `Ĥ` clamped into this range.
pub const HURST_FLOOR: f64 = 0.01;
pub const HURST_CEILING: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub window: usize,
    pub tau1: usize,
    pub tau2: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { window: 504, tau1: 1, tau2: 2 }
    }
}

impl EstimatorConfig {
    pub fn new(window: usize, tau1: usize, tau2: usize) -> Result<Self> {
        let cfg = Self { window, tau1, tau2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau1 == 0 || self.tau2 == 0 || self.tau1 == self.tau2 {
            return Err(Error::InvalidParameter(format!(
                "tau1 and tau2 must be distinct and positive, got {} and {}",
                self.tau1, self.tau2
            )));
        }
        if 4 * self.tau1.max(self.tau2) >= self.window {
            return Err(Error::InvalidParameter(format!(
                "tau1 and tau2 must be below window/4 = {}, got {} and {}",
                self.window as f64 / 4.0,
                self.tau1,
                self.tau2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub index: usize,
    /// Raw estimate, not clamped.
    pub hurst: f64,
    pub sigma: f64,
    /// Set when the raw estimate falls outside (0, 1).
    pub out_of_range: bool,
}

impl HurstEstimate {
    pub fn clamped_hurst(&self) -> f64 {
        clamp_hurst(self.hurst)
    }
}

pub fn clamp_hurst(h: f64) -> f64 {
    h.clamp(HURST_FLOOR, HURST_CEILING)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationGap {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RollingHurst {
    pub estimates: Vec<HurstEstimate>,
    pub gaps: Vec<EstimationGap>,
}

impl RollingHurst {
    pub fn mean_hurst(&self) -> Option<f64> {
        if self.estimates.is_empty() {
            return None;
        }
        Some(self.estimates.iter().map(|e| e.hurst).sum::<f64>() / self.estimates.len() as f64)
    }
}

fn squared_increments(window: &[f64], tau: usize) -> f64 {
    window.windows(tau + 1).map(|w| (w[tau] - w[0]).powi(2)).sum()
}

/// Estimate over the window `series[t_index - T ..= t_index]`.
pub fn estimate_hurst(series: &[f64], cfg: &EstimatorConfig, t_index: usize) -> Result<HurstEstimate> {
    cfg.validate()?;
    let t = cfg.window;
    if t_index < t || t_index >= series.len() {
        return Err(Error::WindowOutOfBounds { index: t_index, window: t, len: series.len() });
    }
    let window = &series[t_index - t..=t_index];
    if let Some(bad) = window.iter().position(|v| !v.is_finite()) {
        return Err(Error::Estimation {
            index: t_index,
            reason: format!("non-finite value at position {}", t_index - t + bad),
        });
    }
    let s1 = squared_increments(window, cfg.tau1);
    let s2 = squared_increments(window, cfg.tau2);
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::Estimation {
            index: t_index,
            reason: "zero increments in window (constant series)".into(),
        });
    }
    let (t1, t2) = (cfg.tau1 as f64, cfg.tau2 as f64);
    let tf = t as f64;
    let hurst = (((tf - t2) * s1).ln() - ((tf - t1) * s2).ln()) / (2.0 * (t1.ln() - t2.ln()));
    if !hurst.is_finite() {
        return Err(Error::Estimation { index: t_index, reason: "non-finite estimate".into() });
    }
    let mean_sq = s1 / (t - cfg.tau1 + 1) as f64;
    let sigma = (mean_sq / t1.powf(2.0 * hurst)).sqrt();
    let out_of_range = !(hurst > 0.0 && hurst < 1.0);
    if out_of_range {
        warn!("Hurst estimate {hurst} at index {t_index} lies outside (0, 1)");
    }
    Ok(HurstEstimate { index: t_index, hurst, sigma, out_of_range })
}

/// One estimate per index `t ≥ T`; failed windows are reported as gaps.
pub fn rolling_hurst(series: &[f64], cfg: &EstimatorConfig, exec: Execution) -> Result<RollingHurst> {
    cfg.validate()?;
    if series.len() <= cfg.window {
        return Ok(RollingHurst::default());
    }
    let first = cfg.window;
    let results = exec.map(series.len() - first, |k| estimate_hurst(series, cfg, first + k));
    let mut out = RollingHurst::default();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => out.estimates.push(e),
            Err(e) => out.gaps.push(EstimationGap { index: first + k, reason: e.to_string() }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        assert!(EstimatorConfig::new(504, 2, 2).is_err());
        assert!(EstimatorConfig::new(504, 0, 2).is_err());
        assert!(EstimatorConfig::new(20, 1, 5).is_err());
        assert!(EstimatorConfig::new(21, 1, 5).is_ok());
    }

    #[test]
    fn bounds_and_constant_series() {
        let cfg = EstimatorConfig::new(40, 1, 2).unwrap();
        let flat = vec![3.0; 100];
        assert!(matches!(estimate_hurst(&flat, &cfg, 50), Err(Error::Estimation { .. })));
        let ramp: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(matches!(estimate_hurst(&ramp, &cfg, 39), Err(Error::WindowOutOfBounds { .. })));
        assert!(matches!(estimate_hurst(&ramp, &cfg, 100), Err(Error::WindowOutOfBounds { .. })));
        // increments of a straight line scale linearly with τ
        let h = estimate_hurst(&ramp, &cfg, 99).unwrap();
        assert!((h.hurst - 1.0).abs() < 0.05);
    }

    #[test]
    fn short_series_yields_nothing() {
        let cfg = EstimatorConfig::new(40, 1, 2).unwrap();
        let r = rolling_hurst(&[1.0; 40], &cfg, Execution::Sequential).unwrap();
        assert!(r.estimates.is_empty() && r.gaps.is_empty());
        assert_eq!(r.mean_hurst(), None);
    }

    #[test]
    fn gaps_are_not_fatal() {
        let cfg = EstimatorConfig::new(20, 1, 2).unwrap();
        let mut series: Vec<f64> = (0..60).map(|i| ((i * 7919) % 13) as f64).collect();
        series[45] = f64::NAN;
        let r = rolling_hurst(&series, &cfg, Execution::Parallel).unwrap();
        assert_eq!(r.estimates.len() + r.gaps.len(), 40);
        assert_eq!(r.gaps.len(), 15);
        assert!(r.gaps.iter().all(|g| (45..=59).contains(&g.index)));
    }

    #[test]
    fn clamping() {
        assert_eq!(clamp_hurst(-0.2), HURST_FLOOR);
        assert_eq!(clamp_hurst(1.3), HURST_CEILING);
        assert_eq!(clamp_hurst(0.4), 0.4);
    }
}
