//! Standard-normal primitives and the Gaussian integrals behind the
//! closed-form accuracy metrics.
//!
//! Throughout, `g` is the standard normal density and `N` its distribution
//! function. The three integral identities are
//!
//! * `∫_0^∞ N(αx) g(x) dx = 1/4 + arctan(α) / (2π)`
//! * `∫_a^∞ N(αx) g(x) dx`, expanded to degree 5 around `a = 0`
//! * `∫_a^∞ u N(αu) g(u) du = N(αa) g(a) + α / sqrt(2π(1+α²)) · (1 - N(a sqrt(1+α²)))`

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::Result;
use crate::quadrature::{integrate_upper_tail, QuadratureConfig};

/// 1 / sqrt(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_9;

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF through `erfc`, accurate in both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `∫_0^∞ N(αx) g(x) dx`.
pub fn half_line_integral(alpha: f64) -> f64 {
    0.25 + alpha.atan() / (2.0 * PI)
}

/// Degree-5 Taylor expansion of `∫_a^∞ N(αx) g(x) dx` around `a = 0`.
/// The truncation error is `O(a^6)`; only meaningful for small `|a|`.
pub fn tail_integral_taylor(alpha: f64, a: f64) -> f64 {
    half_line_integral(alpha) + tail_integral_taylor_increment(alpha, a)
}

/// Non-constant part of [`tail_integral_taylor`], i.e. the expansion of
/// `-∫_0^a N(αx) g(x) dx`.
pub fn tail_integral_taylor_increment(alpha: f64, a: f64) -> f64 {
    let a2 = a * a;
    let a3 = a2 * a;
    let a4 = a2 * a2;
    let a5 = a4 * a;
    -a * INV_SQRT_2PI / 2.0 - alpha * a2 / (4.0 * PI) + a3 * INV_SQRT_2PI / 12.0
        + (alpha.powi(3) + 3.0 * alpha) * a4 / (48.0 * PI)
        - a5 * INV_SQRT_2PI / 80.0
}

/// `∫_a^∞ N(αx) g(x) dx` by adaptive quadrature.
pub fn tail_integral_exact(alpha: f64, a: f64, cfg: &QuadratureConfig) -> Result<f64> {
    integrate_upper_tail(|x| normal_cdf(alpha * x) * normal_pdf(x), a, cfg)
}

/// `∫_a^∞ u N(αu) g(u) du` in closed form.
pub fn first_moment_tail_integral(alpha: f64, a: f64) -> f64 {
    let s = (1.0 + alpha * alpha).sqrt();
    normal_cdf(alpha * a) * normal_pdf(a)
        + alpha / ((2.0 * PI).sqrt() * s) * normal_cdf(-a * s)
}
