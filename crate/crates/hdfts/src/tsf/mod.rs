//! Scalar time-series engines: exponential smoothing, autoregression with
//! AIC order selection (the ARIMA surrogate), and autoregressive quantile
//! regression.

mod ar;
mod ets;
mod quantile;

pub use ar::{fit_ar, fit_arima_surrogate, ArModel, ArimaSurrogate};
pub use ets::{fit_ets, EtsModel, EtsVariant};
pub use quantile::{fit_quantile_ar, fit_quantile_ar_fixed, mean_pinball_loss, QuantileAr};

use crate::error::{Error, Result};

/// Default lag cap for the AR engine and the ARIMA surrogate.
pub const DEFAULT_AR_P_MAX: usize = 5;

/// Point-forecast engine family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Ets,
    Arima,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EngineKind::Ets => write!(f, "ets"),
            EngineKind::Arima => write!(f, "arima"),
        }
    }
}

impl std::str::FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ets" => Ok(EngineKind::Ets),
            "arima" => Ok(EngineKind::Arima),
            other => Err(Error::InvalidInput(format!(
                "unknown engine {other:?}; expected ets or arima"
            ))),
        }
    }
}

/// Forecasts `horizon` steps ahead with the chosen engine.
///
/// Series shorter than the engines' minimum fall back to repeating the
/// last observation, as do explosive extrapolations (non-finite values or
/// growth past 50x the observed range), which high-order fits on very
/// short windows can produce.
pub fn forecast_series(series: &[f64], horizon: usize, engine: EngineKind) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, found: 0 });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    if horizon == 0 {
        return Ok(Vec::new());
    }
    let last = *series.last().unwrap();
    if series.len() < 4 {
        return Ok(vec![last; horizon]);
    }
    let forecasts = match engine {
        EngineKind::Ets => fit_ets(series, horizon)?.1,
        EngineKind::Arima => {
            let p_max = DEFAULT_AR_P_MAX
                .min(series.len() / 3)
                .min(series.len().saturating_sub(2))
                .max(1);
            fit_arima_surrogate(series, p_max, horizon)?.1
        }
    };
    let scale = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let limit = 50.0 * (scale + 1.0);
    if forecasts.iter().any(|v| !v.is_finite() || v.abs() > limit) {
        return Ok(vec![last; horizon]);
    }
    Ok(forecasts)
}
