//! Search for the lag set maximising the non-conditional hit ratio.
//!
//! Lags are parameterised by the logarithms of the gaps between consecutive
//! bounds (`δ_0 = 0`), which keeps them ordered and `Σ_S` well conditioned,
//! and optimised with a multi-start Nelder–Mead simplex. The starting points
//! are geometric ladders centred on the horizon; nothing in the search
//! imposes the reciprocity `δ_i δ_{n+1-i} = h²`, so it can be checked on the
//! output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accuracy::hit_ratio;
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::fbm::FbmSpec;
use crate::predictor::{solve_predictor, LagStructure, MARTINGALE_SNAP};

pub const MAX_LAGS: usize = 8;
const STARTS: usize = 5;
const LOG_GAP_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagOptimum {
    /// Optimal `δ_1..δ_n`, in the same time unit as the horizon.
    pub lags: Vec<f64>,
    pub hit_ratio: f64,
    pub n: usize,
    pub horizon: f64,
}

impl LagOptimum {
    /// `δ_i δ_{n+1-i} / h²` for each `i`; all close to one on an optimum.
    pub fn reciprocity_ratios(&self) -> Vec<f64> {
        let n = self.lags.len();
        (0..n)
            .map(|i| self.lags[i] * self.lags[n - 1 - i] / (self.horizon * self.horizon))
            .collect()
    }

    pub fn lag_structure(&self) -> Result<LagStructure> {
        LagStructure::anchored(self.horizon, &self.lags)
    }
}

/// Hit ratio of the predictor built on `lags`.
pub fn hit_ratio_of_lags(spec: &FbmSpec, lags: &LagStructure) -> Result<f64> {
    Ok(hit_ratio(&solve_predictor(spec, lags)?))
}

fn lags_from_log_gaps(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |acc, g| {
            *acc += g.clamp(-LOG_GAP_BOUND, LOG_GAP_BOUND).exp();
            Some(*acc)
        })
        .collect()
}

fn log_gaps_from_lags(lags: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    lags.iter()
        .map(|d| {
            let g = (d - prev).ln();
            prev = *d;
            g
        })
        .collect()
}

/// Negative hit ratio for unit horizon; degenerate lag sets score as a coin flip.
fn loss(spec: &FbmSpec, x: &[f64]) -> f64 {
    let lags = lags_from_log_gaps(x);
    match LagStructure::anchored(1.0, &lags).and_then(|l| hit_ratio_of_lags(spec, &l)) {
        Ok(rho) if rho.is_finite() => -rho,
        _ => -0.5,
    }
}

/// Geometric ladder `r^{i - (n+1)/2}`, `i = 1..n`, centred on the unit horizon.
fn ladder(n: usize, ratio: f64) -> Vec<f64> {
    let mid = (n as f64 + 1.0) / 2.0;
    (1..=n).map(|i| ratio.powf(i as f64 - mid)).collect()
}

pub fn optimize_lags(spec: &FbmSpec, horizon: f64, n: usize, exec: Execution) -> Result<LagOptimum> {
    if !(1..=MAX_LAGS).contains(&n) {
        return Err(Error::InvalidParameter(format!("n must be in 1..={MAX_LAGS}, got {n}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if (spec.hurst() - 0.5).abs() < MARTINGALE_SNAP {
        return Err(Error::InvalidParameter(
            "every lag set has hit ratio ½ for H = ½; there is no optimum".into(),
        ));
    }

    let runs = exec.map(STARTS, |k| {
        let ratio = 3.5 * 1.6f64.powi(k as i32 - 2);
        let mut rng = stream_rng(0x1a65, k as u64);
        let start: Vec<f64> = log_gaps_from_lags(&ladder(n, ratio))
            .into_iter()
            .map(|g| if k == 0 { g } else { g + rng.random_range(-0.2..0.2) })
            .collect();
        polish(|x| loss(spec, x), start)
    });
    let (x, value) = runs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    if !(value < -0.5) {
        return Err(Error::Optimizer(format!(
            "no lag set improved on a coin flip for H = {}",
            spec.hurst()
        )));
    }
    Ok(LagOptimum {
        lags: lags_from_log_gaps(&x).into_iter().map(|d| d * horizon).collect(),
        hit_ratio: -value,
        n,
        horizon,
    })
}

/// Optimal lags for every `n` in `1..=max_n` at unit horizon.
pub fn lag_table(spec: &FbmSpec, max_n: usize, exec: Execution) -> Result<Vec<LagOptimum>> {
    if !(1..=MAX_LAGS).contains(&max_n) {
        return Err(Error::InvalidParameter(format!("max_n must be in 1..={MAX_LAGS}, got {max_n}")));
    }
    exec.map(max_n, |k| optimize_lags(spec, 1.0, k + 1, exec)).into_iter().collect()
}

/// Restarts Nelder–Mead from its own optimum until the value stops improving.
fn polish<F: Fn(&[f64]) -> f64>(f: F, start: Vec<f64>) -> (Vec<f64>, f64) {
    let (mut x, mut fx) = nelder_mead(&f, start, 0.5);
    for _ in 0..10 {
        let (y, fy) = nelder_mead(&f, x.clone(), 0.05);
        let improved = fy < fx - 1e-16;
        if fy <= fx {
            x = y;
            fx = fy;
        }
        if !improved {
            break;
        }
    }
    (x, fx)
}

/// Plain Nelder–Mead minimiser (reflection 1, expansion 2, contraction ½, shrink ½).
pub(crate) fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: Vec<f64>, step: f64) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let f0 = f(&start);
    simplex.push((start.clone(), f0));
    for i in 0..dim {
        let mut p = start.clone();
        p[i] += step;
        let fp = f(&p);
        simplex.push((p, fp));
    }

    let max_iter = 4000 * dim.max(1);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let size = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-16 && size <= 1e-10 {
            break;
        }
        if size <= 1e-13 {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(p, _)| p[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(2.0);
            let fe = f(&expanded);
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < worst {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < worst.min(fr) {
                simplex[dim] = (contracted, fc);
            } else {
                let anchor = simplex[0].0.clone();
                for (p, fp) in simplex.iter_mut().skip(1) {
                    for (pj, aj) in p.iter_mut().zip(&anchor) {
                        *pj = aj + 0.5 * (*pj - aj);
                    }
                    *fp = f(p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}
