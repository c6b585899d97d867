//! Forecasting the fractional Brownian motion (fBm) in discrete time.
//!
//! The crate builds the covariance-based linear predictor of a future fBm
//! increment from lagged increments and evaluates it through closed-form
//! accuracy metrics: hit ratios, ternary (good / bad / abstain) probabilities
//! under a forecast threshold, and the expected return, lower semi-deviation
//! and risk-adjusted return of the associated long/short/flat strategy.
//! On top of these it provides the hit-ratio-optimal lag search, the
//! risk-adjusted optimal threshold, a rolling variance-ratio Hurst estimator
//! and a backtest pipeline, plus Monte Carlo oracles for every closed form.
//!
//! Monte Carlo loops and batch simulations run on rayon when the `parallel`
//! feature (on by default) is enabled; see [`Execution`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accuracy;
pub mod backtest;
pub mod error;
pub mod exec;
pub mod fbm;
pub mod gaussian;
pub mod hurst;
pub mod lags;
pub mod montecarlo;
pub mod predictor;
pub mod quadrature;
pub mod strategy;

pub use accuracy::{Evaluator, TernaryProbabilities};
pub use backtest::{BacktestConfig, BacktestReport, LagMode, SeriesRecord, ThresholdMode};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fbm::{FbmSpec, SamplePaths, TimeGrid};
pub use hurst::EstimatorConfig;
pub use lags::LagOptimum;
pub use predictor::{LagStructure, PredictorSolution};
pub use quadrature::QuadratureConfig;
pub use strategy::StrategyMetrics;
