//! Expected return, lower semi-deviation and risk-adjusted return of the
//! ternary strategy, and the threshold maximising the risk-adjusted return.
//!
//! The strategy is long one unit when the forecast is at least `θ`, short one
//! unit when it is at most `-θ`, and flat otherwise. All quantities are per
//! forecast period.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{normal_cdf, normal_pdf};
use crate::predictor::PredictorSolution;

const GRID_POINTS: usize = 64;
const MAX_BRACKET_DOUBLINGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub expected_return: f64,
    pub risk: f64,
    pub risk_adjusted: f64,
    pub lambda: f64,
    pub theta: f64,
}

fn check(solution: &PredictorSolution, theta: f64) -> Result<()> {
    if solution.a == 0.0 {
        return Err(Error::Martingale("the strategy metric"));
    }
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be non-negative, got {theta}")));
    }
    Ok(())
}

/// `E[R_strat(θ)] = 2a g(θ/a)`.
pub fn expected_return(solution: &PredictorSolution, theta: f64) -> Result<f64> {
    check(solution, theta)?;
    Ok(expected_return_unchecked(solution, theta))
}

fn expected_return_unchecked(s: &PredictorSolution, theta: f64) -> f64 {
    2.0 * s.a * normal_pdf(theta / s.a)
}

/// `-E[min(0, R_strat(θ))] = -2a N(-θ/b) g(θ/a) + sqrt(2/π) σh^H N(-θ sqrt(1/a² + 1/b²))`.
pub fn risk(solution: &PredictorSolution, theta: f64) -> Result<f64> {
    check(solution, theta)?;
    Ok(risk_unchecked(solution, theta))
}

fn risk_unchecked(s: &PredictorSolution, theta: f64) -> f64 {
    let (a, b) = (s.a, s.b);
    let joint = theta * (1.0 / (a * a) + 1.0 / (b * b)).sqrt();
    let value = -2.0 * a * normal_cdf(-theta / b) * normal_pdf(theta / a)
        + (2.0 / PI).sqrt() * s.return_std() * normal_cdf(-joint);
    // The two terms cancel to rounding level far in the tail.
    value.max(0.0)
}

fn objective(s: &PredictorSolution, theta: f64, lambda: f64) -> f64 {
    expected_return_unchecked(s, theta) - lambda * risk_unchecked(s, theta)
}

/// Expected return, risk and `R̃_λ = R̃ - λ σ̃⁻` at threshold `θ`.
/// Negative `λ` (risk seeking) is accepted.
pub fn risk_adjusted_return(solution: &PredictorSolution, theta: f64, lambda: f64) -> Result<StrategyMetrics> {
    check(solution, theta)?;
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be finite, got {lambda}")));
    }
    let expected_return = expected_return_unchecked(solution, theta);
    let risk = risk_unchecked(solution, theta);
    Ok(StrategyMetrics {
        expected_return,
        risk,
        risk_adjusted: expected_return - lambda * risk,
        lambda,
        theta,
    })
}

/// Slope of `R̃_λ` at `θ = 0`, which is `λ b / (π a)`.
pub fn risk_adjusted_slope_at_zero(solution: &PredictorSolution, lambda: f64) -> f64 {
    lambda * solution.b / (PI * solution.a)
}

/// `θ*_λ = argmax_{θ ≥ 0} R̃_λ(θ)`.
///
/// A 64-point grid on `[0, 10a]` brackets the maximum (the range is doubled
/// while the maximum sits on its right edge), then golden-section search
/// refines it. When the grid maximum is at `θ = 0` and the slope there is not
/// positive (`λ ≤ 0`), the threshold is exactly zero.
pub fn optimal_threshold(solution: &PredictorSolution, lambda: f64) -> Result<(f64, StrategyMetrics)> {
    check(solution, 0.0)?;
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be finite, got {lambda}")));
    }
    let f = |theta: f64| objective(solution, theta, lambda);

    let mut upper = 10.0 * solution.a;
    let mut doublings = 0;
    let (lo, hi, best_grid) = loop {
        let step = upper / (GRID_POINTS - 1) as f64;
        let values: Vec<f64> = (0..GRID_POINTS).map(|k| f(k as f64 * step)).collect();
        let k = values
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map(|(k, _)| k)
            .expect("grid is non-empty");
        if k == GRID_POINTS - 1 {
            doublings += 1;
            if doublings > MAX_BRACKET_DOUBLINGS {
                return Err(Error::Optimizer(format!(
                    "risk-adjusted return still increasing at θ = {upper}"
                )));
            }
            upper *= 2.0;
            continue;
        }
        if k == 0 && risk_adjusted_slope_at_zero(solution, lambda) <= 0.0 {
            return Ok((0.0, risk_adjusted_return(solution, 0.0, lambda)?));
        }
        let lo = if k == 0 { 0.0 } else { (k - 1) as f64 * step };
        break (lo, (k + 1) as f64 * step, k as f64 * step);
    };

    let theta = golden_section_max(&f, lo, hi, 1e-14 * solution.a);
    let theta = if f(theta) >= f(best_grid) { theta } else { best_grid };
    Ok((theta, risk_adjusted_return(solution, theta, lambda)?))
}

fn golden_section_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}
