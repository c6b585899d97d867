//! Hit ratios and thresholded (ternary) sign-forecast probabilities.
//!
//! With the Cholesky representation `R̂ = aU`, `R = aU + bV`, a forecast
//! kept by the threshold map `x ↦ x·1{|x| ≥ θ}` is a good sign forecast with
//! probability `p⁺(θ)`, a bad one with probability `p⁻(θ)`, and is discarded
//! with probability `p⁰(θ) = 2N(θ/a) - 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{tail_integral_exact, normal_cdf};
use crate::predictor::PredictorSolution;
use crate::quadrature::QuadratureConfig;

/// Largest `θ/a` for which the Taylor evaluator is used; beyond it the
/// exact evaluator takes over.
pub const TAYLOR_VALIDITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluator {
    Taylor,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TernaryProbabilities {
    pub p_plus: f64,
    pub p_minus: f64,
    pub p_zero: f64,
    pub theta: f64,
    pub evaluator: Evaluator,
}

impl TernaryProbabilities {
    /// Share of good forecasts among the non-discarded ones.
    pub fn selectivity(&self) -> f64 {
        self.p_plus / (self.p_plus + self.p_minus)
    }
}

/// Non-conditional hit ratio `½ + arctan(a/b)/π`; exactly ½ for the martingale predictor.
pub fn hit_ratio(solution: &PredictorSolution) -> f64 {
    if solution.a == 0.0 {
        return 0.5;
    }
    0.5 + (solution.a / solution.b).atan() / PI
}

/// Hit ratio conditional on the observed lagged returns: `N(|R̂(y)| / b)`.
pub fn conditional_hit_ratio(solution: &PredictorSolution, observed_returns: &[f64]) -> Result<f64> {
    let forecast = solution.forecast(observed_returns)?;
    Ok(normal_cdf(forecast.abs() / solution.b))
}

fn check_theta(solution: &PredictorSolution, theta: f64) -> Result<()> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be non-negative, got {theta}")));
    }
    if solution.a == 0.0 {
        return Err(Error::Martingale("the ternary probability"));
    }
    Ok(())
}

fn zero_probability(x: f64) -> f64 {
    1.0 - 2.0 * normal_cdf(-x)
}

/// Ternary probabilities from the tail integrals
/// `p⁺ = N(-θ/a) - ∫_{θ/a}^∞ N(-(a/b)u) g(u) du + ∫_{θ/a}^∞ N((a/b)u) g(u) du`
/// and its mirror for `p⁻`, evaluated by adaptive quadrature.
///
/// Since the two integrals add up to `N(-θ/a)`, these reduce to
/// `p⁺ = 2∫_{θ/a}^∞ N((a/b)u) g(u) du` and `p⁻ = 2∫_{θ/a}^∞ N(-(a/b)u) g(u) du`,
/// which keep full relative precision far in the tail.
pub fn ternary_probabilities_exact(
    solution: &PredictorSolution,
    theta: f64,
    cfg: &QuadratureConfig,
) -> Result<TernaryProbabilities> {
    check_theta(solution, theta)?;
    let x = theta / solution.a;
    let alpha = solution.a / solution.b;
    let agree = tail_integral_exact(alpha, x, cfg)?;
    let disagree = tail_integral_exact(-alpha, x, cfg)?;
    Ok(TernaryProbabilities {
        p_plus: (2.0 * agree).clamp(0.0, 1.0),
        p_minus: (2.0 * disagree).clamp(0.0, 1.0),
        p_zero: zero_probability(x),
        theta,
        evaluator: Evaluator::Exact,
    })
}

/// Fourth-order expansion of `p⁺`, `p⁻` around `θ = 0`; `p⁰` is exact.
///
/// For `θ/a > TAYLOR_VALIDITY` the expansion is unreliable and the exact
/// evaluator (default quadrature settings) is used instead; the returned
/// `evaluator` field says which one ran.
pub fn ternary_probabilities_taylor(solution: &PredictorSolution, theta: f64) -> Result<TernaryProbabilities> {
    check_theta(solution, theta)?;
    let (a, b) = (solution.a, solution.b);
    let x = theta / a;
    if x > TAYLOR_VALIDITY {
        return ternary_probabilities_exact(solution, theta, &QuadratureConfig::default());
    }
    let t2 = theta * theta;
    let t4 = t2 * t2;
    let skew = (a / b).atan() / PI - t2 / (2.0 * PI * a * b)
        + (1.0 / (a * b.powi(3)) + 3.0 / (a.powi(3) * b)) * t4 / (24.0 * PI);
    let tail = normal_cdf(-x);
    Ok(TernaryProbabilities {
        p_plus: tail + skew,
        p_minus: tail - skew,
        p_zero: zero_probability(x),
        theta,
        evaluator: Evaluator::Taylor,
    })
}

/// Exact ternary probabilities with default quadrature settings.
pub fn ternary_probabilities(solution: &PredictorSolution, theta: f64) -> Result<TernaryProbabilities> {
    ternary_probabilities_exact(solution, theta, &QuadratureConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::FbmSpec;
    use crate::predictor::{solve_predictor, LagStructure};
    use approx::assert_abs_diff_eq;

    fn single(h: f64, delta: f64) -> PredictorSolution {
        let spec = FbmSpec::standard(h).unwrap();
        solve_predictor(&spec, &LagStructure::anchored(1.0, &[delta]).unwrap()).unwrap()
    }

    #[test]
    fn hit_ratio_table_values() {
        assert_abs_diff_eq!(hit_ratio(&single(0.65, 1.0)), 0.5742, epsilon = 5e-5);
        assert_abs_diff_eq!(hit_ratio(&single(0.15, 1.0)), 0.6256, epsilon = 5e-5);
        assert_eq!(hit_ratio(&single(0.5, 1.0)), 0.5);
    }

    #[test]
    fn hit_ratio_forms_agree() {
        for h in [0.1, 0.3, 0.65, 0.9] {
            let s = single(h, 1.0);
            let alt = 1.0 - (s.total_variance / (s.a * s.a) - 1.0).sqrt().atan() / PI;
            assert_abs_diff_eq!(hit_ratio(&s), alt, epsilon = 1e-14);
        }
    }

    #[test]
    fn asymmetry_in_hurst() {
        for h in [0.6, 0.7, 0.8] {
            assert!(hit_ratio(&single(h, 1.0)) > hit_ratio(&single(1.0 - h, 1.0)));
        }
    }

    #[test]
    fn reciprocal_lag_symmetry() {
        for h in [0.15, 0.65] {
            for c in [2.0, 5.0, 10.0] {
                assert_abs_diff_eq!(hit_ratio(&single(h, c)), hit_ratio(&single(h, 1.0 / c)), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn conditional_hit_ratio_examples() {
        let bm = single(0.5, 1.0);
        assert_eq!(conditional_hit_ratio(&bm, &[0.7]).unwrap(), 0.5);
        let s = single(0.65, 1.0);
        assert_eq!(conditional_hit_ratio(&s, &[0.0]).unwrap(), 0.5);
        let y = s.b / s.weights[0];
        assert_abs_diff_eq!(conditional_hit_ratio(&s, &[y]).unwrap(), 0.841_344_746, epsilon = 1e-9);
        assert_abs_diff_eq!(conditional_hit_ratio(&s, &[-y]).unwrap(), 0.841_344_746, epsilon = 1e-9);
    }

    #[test]
    fn ternary_at_zero_threshold() {
        let s = single(0.65, 1.0);
        let rho = hit_ratio(&s);
        for t in [ternary_probabilities_taylor(&s, 0.0).unwrap(), ternary_probabilities(&s, 0.0).unwrap()] {
            assert_abs_diff_eq!(t.p_plus, rho, epsilon = 1e-12);
            assert_abs_diff_eq!(t.p_minus, 1.0 - rho, epsilon = 1e-12);
            assert_eq!(t.p_zero, 0.0);
        }
    }

    #[test]
    fn ternary_zero_probability_at_theta_a() {
        let s = single(0.65, 1.0);
        let t = ternary_probabilities_taylor(&s, s.a).unwrap();
        assert_abs_diff_eq!(t.p_zero, 0.682_689_492, epsilon = 1e-9);
        assert_eq!(t.evaluator, Evaluator::Exact);
    }

    #[test]
    fn ternary_large_threshold() {
        let s = single(0.65, 1.0);
        let t = ternary_probabilities_taylor(&s, 50.0 * s.a).unwrap();
        assert!(t.p_zero > 1.0 - 1e-12);
        assert!(t.p_plus >= 0.0 && t.p_minus >= 0.0);
    }

    #[test]
    fn taylor_close_to_exact_near_zero() {
        let s = single(0.65, 1.0);
        let theta = 0.05 * s.a;
        let t = ternary_probabilities_taylor(&s, theta).unwrap();
        let e = ternary_probabilities(&s, theta).unwrap();
        assert_eq!(t.evaluator, Evaluator::Taylor);
        assert_abs_diff_eq!(t.p_plus, e.p_plus, epsilon = 1e-6);
        assert_abs_diff_eq!(t.p_minus, e.p_minus, epsilon = 1e-6);
    }

    #[test]
    fn sums_and_pair_total() {
        let s = single(0.3, 0.7);
        for k in 0..20 {
            let theta = 0.2 * k as f64 * s.a;
            let e = ternary_probabilities(&s, theta).unwrap();
            assert_abs_diff_eq!(e.p_plus + e.p_minus + e.p_zero, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(e.p_plus + e.p_minus, 2.0 * normal_cdf(-theta / s.a), epsilon = 1e-12);
        }
    }

    #[test]
    fn martingale_and_negative_theta_rejected() {
        let bm = single(0.5, 1.0);
        assert!(matches!(ternary_probabilities(&bm, 0.1), Err(Error::Martingale(_))));
        assert!(matches!(ternary_probabilities_taylor(&bm, 0.1), Err(Error::Martingale(_))));
        let s = single(0.7, 1.0);
        assert!(ternary_probabilities(&s, -0.1).is_err());
    }

    #[test]
    fn monotone_and_ordered_slopes() {
        for h in [0.15, 0.65] {
            let s = single(h, 1.0);
            let grid: Vec<_> = (0..40)
                .map(|k| ternary_probabilities(&s, 0.1 * k as f64 * s.a).unwrap())
                .collect();
            for w in grid.windows(2) {
                let dp = w[1].p_plus - w[0].p_plus;
                let dm = w[1].p_minus - w[0].p_minus;
                assert!(dp <= 1e-12 && dm <= 1e-12);
                assert!(dp <= dm + 1e-12, "slopes {dp} {dm}");
            }
        }
    }

    #[test]
    fn selectivity_increases_to_one() {
        let s = single(0.65, 1.0);
        let base = ternary_probabilities(&s, 0.0).unwrap().p_plus;
        for k in 1..10 {
            let t = ternary_probabilities(&s, k as f64 * s.a).unwrap();
            assert!(t.selectivity() >= base);
        }
        assert!(ternary_probabilities(&s, 10.0 * s.a).unwrap().selectivity() > 0.99);
    }
}
