//! Forecasting toolkit for high-dimensional functional time series: panels
//! of curves observed over years across units and groups (e.g. subnational
//! age-specific mortality rates by sex).
//!
//! The pipeline decomposes a smoothed panel into interpretable mean
//! effects via two-way functional ANOVA, optionally removes nested
//! per-group one-way effects, models the remaining stochastic process with
//! a functional factor model, extrapolates factor scores with scalar
//! time-series engines, and wraps the integrated point forecasts in split
//! or sequential conformal prediction intervals. An expanding-window
//! harness evaluates point and interval accuracy (RMSFE, MAFE, empirical
//! coverage, coverage probability difference, interval score).

// numerical code where indexed loops over shared indices are clearer
#![allow(clippy::needless_range_loop)]

pub mod conformal;
pub mod error;
pub mod eval;
pub mod export;
pub mod factor;
pub mod fanova;
pub mod panel;
pub mod pipeline;
pub mod sim;
pub mod smoothing;
pub mod tsf;

pub use error::{Error, Result};
