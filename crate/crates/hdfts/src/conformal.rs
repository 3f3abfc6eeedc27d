//! Conformal interval construction on the original (rate) scale: split
//! calibration of a scale multiplier against held-out residuals, and
//! sequential predictive quantiles of absolute residuals via autoregressive
//! quantile regression.

use ndarray::{Array4, ArrayView2};

use crate::error::{Error, Result};
use crate::panel::{FunctionalPanel, Scale, SplitPlan};
use crate::pipeline::PipelineCache;
use crate::tsf::fit_quantile_ar;

/// Pointwise summary used to scale split-conformal intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    /// Pointwise standard deviation of validation residuals.
    Sd,
    /// Pointwise (1 - alpha) empirical quantile of absolute validation
    /// residuals.
    Quantile,
}

/// Interval construction mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiMode {
    SplitSd,
    SplitQuantile,
    Sequential,
    None,
}

impl std::fmt::Display for PiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PiMode::SplitSd => write!(f, "split-sd"),
            PiMode::SplitQuantile => write!(f, "split-quantile"),
            PiMode::Sequential => write!(f, "sequential"),
            PiMode::None => write!(f, "none"),
        }
    }
}

impl std::str::FromStr for PiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "split-sd" => Ok(PiMode::SplitSd),
            "split-quantile" => Ok(PiMode::SplitQuantile),
            "sequential" => Ok(PiMode::Sequential),
            "none" => Ok(PiMode::None),
            other => Err(Error::InvalidInput(format!(
                "unknown interval mode {other:?}; expected split-sd, split-quantile, sequential, or none"
            ))),
        }
    }
}

/// Calibrated split-conformal scaling for one (unit, group, horizon).
#[derive(Debug, Clone)]
pub struct SplitCalibration {
    /// Scale curve over the grid, pointwise non-negative.
    pub gamma: Vec<f64>,
    /// Calibrated multiplier, strictly positive.
    pub xi: f64,
    pub mode: ScaleMode,
    pub alpha: f64,
}

/// Empirical quantile with the inverted-CDF (lower tie) convention:
/// the ceil(q·n)-th order statistic, clamped to the sample.
pub fn empirical_quantile_lower(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Calibrates the split-conformal multiplier so the coverage of
/// `|residual| <= xi * gamma` on the calibration residuals is as close as
/// possible to `1 - alpha`.
///
/// Points with a vanishing scale are auto-covered when their residual also
/// vanishes and never covered otherwise; the multiplier is chosen by direct
/// minimization of the coverage gap over the finite ratio candidates (ties
/// toward the smaller candidate).
pub fn calibrate_split(
    residuals: ArrayView2<'_, f64>,
    mode: ScaleMode,
    alpha: f64,
) -> Result<SplitCalibration> {
    let (m, p) = residuals.dim();
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "significance level must lie in (0, 1), got {alpha}"
        )));
    }
    let needed = match mode {
        ScaleMode::Sd => 2,
        ScaleMode::Quantile => 1,
    };
    if m < needed {
        return Err(Error::TooFewPoints { needed, found: m });
    }

    let mut gamma = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = (0..m).map(|r| residuals[[r, j]]).collect();
        gamma[j] = match mode {
            ScaleMode::Sd => {
                let mean = col.iter().sum::<f64>() / m as f64;
                let var =
                    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0);
                var.sqrt()
            }
            ScaleMode::Quantile => {
                let abs: Vec<f64> = col.iter().map(|v| v.abs()).collect();
                empirical_quantile_lower(&abs, 1.0 - alpha)
            }
        };
    }

    let xi = calibrate_xi(residuals, &gamma, alpha)?;
    Ok(SplitCalibration { gamma, xi, mode, alpha })
}

/// Coverage-gap-minimizing multiplier given a fixed scale curve.
///
/// Coverage is evaluated exactly as interval application does
/// (`|residual| <= xi * gamma`), so the attained gap matches what any
/// downstream coverage check sees, ulp ties included.
fn calibrate_xi(residuals: ArrayView2<'_, f64>, gamma: &[f64], alpha: f64) -> Result<f64> {
    let (m, p) = residuals.dim();
    let total = (m * p) as f64;
    let target = 1.0 - alpha;

    let mut any_positive_scale = false;
    let mut never_covered = 0usize;
    let mut ratios: Vec<f64> = Vec::new();
    for r in 0..m {
        for j in 0..p {
            let a = residuals[[r, j]].abs();
            if gamma[j] > 0.0 {
                any_positive_scale = true;
                let ratio = a / gamma[j];
                if ratio > 0.0 {
                    ratios.push(ratio);
                }
            } else if a != 0.0 {
                never_covered += 1;
            }
        }
    }

    if ratios.is_empty() {
        if !any_positive_scale && never_covered > 0 {
            return Err(Error::DegenerateScale);
        }
        return Ok(1.0); // all residuals vanish; any multiplier is exact
    }

    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ratios.dedup();

    let coverage = |xi: f64| -> f64 {
        let mut covered = 0usize;
        for r in 0..m {
            for j in 0..p {
                if residuals[[r, j]].abs() <= xi * gamma[j] {
                    covered += 1;
                }
            }
        }
        covered as f64 / total
    };

    // a candidate below the smallest ratio covers only the points every
    // positive multiplier covers
    let mut best_xi = ratios[0] / 2.0;
    let mut best_gap = (coverage(best_xi) - target).abs();
    for &value in &ratios {
        let gap = (coverage(value) - target).abs();
        if gap < best_gap {
            best_gap = gap;
            best_xi = value;
        }
    }
    Ok(best_xi)
}

/// Interval curves `forecast -,+ xi * gamma`, the lower bound clamped at
/// zero (rates are non-negative).
pub fn split_interval_curves(
    forecast_original: &[f64],
    cal: &SplitCalibration,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if forecast_original.len() != cal.gamma.len() {
        return Err(Error::Dimension(format!(
            "forecast length {} does not match scale curve length {}",
            forecast_original.len(),
            cal.gamma.len()
        )));
    }
    let mut lower = Vec::with_capacity(cal.gamma.len());
    let mut upper = Vec::with_capacity(cal.gamma.len());
    for (f, g) in forecast_original.iter().zip(&cal.gamma) {
        let half = cal.xi * g;
        lower.push((f - half).max(0.0));
        upper.push(f + half);
    }
    Ok((lower, upper))
}

/// Validation residuals on the original scale from the expanding-window
/// scheme: one matrix of shape (M, p) per (group, unit), where
/// M = #validation years - h + 1.
#[derive(Debug)]
pub struct ValidationResiduals {
    /// Shape (G, N, M, p).
    pub residuals: Array4<f64>,
    /// Window-end index used for each of the M residual curves.
    pub origins: Vec<usize>,
}

/// Computes h-step validation residuals by refitting the pipeline at every
/// expanding origin inside the training-plus-validation span and
/// subtracting the original-scale forecast from the held-out observation.
pub fn validation_residuals(
    panel: &FunctionalPanel,
    split: &SplitPlan,
    h: usize,
    cache: &mut PipelineCache<'_>,
) -> Result<ValidationResiduals> {
    if panel.scale() != Scale::LogRate {
        return Err(Error::InvalidInput(
            "validation residuals expect a log-scale panel".into(),
        ));
    }
    if h == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let v = split.validation_years().len();
    if v < h {
        return Err(Error::HorizonExceedsValidation { horizon: h, window: v });
    }
    let m_count = v - h + 1;
    let last_train = *split
        .train_years()
        .last()
        .ok_or_else(|| Error::InvalidInput("empty training window".into()))?;
    let train_end = panel
        .index()
        .year_position(last_train)
        .ok_or_else(|| Error::InvalidInput(format!("training year {last_train} not in panel")))?;

    let origins: Vec<usize> = (0..m_count).map(|m| train_end + m).collect();
    cache.precompute(origins.iter().copied())?;

    let (n_g, n_u, _n_t, p) = panel.values().dim();
    let mut residuals = Array4::zeros((n_g, n_u, m_count, p));
    for (m, &origin) in origins.iter().enumerate() {
        let fit = cache.fit_at(origin)?;
        let forecast = fit.forecast_original(h)?;
        let target = origin + h;
        for g in 0..n_g {
            for i in 0..n_u {
                for j in 0..p {
                    let actual = panel.value(g, i, target, j).exp();
                    residuals[[g, i, m, j]] = actual - forecast[[g, i, j]];
                }
            }
        }
    }
    Ok(ValidationResiduals { residuals, origins })
}

/// One-step-ahead predictive quantile of an absolute-residual history via
/// autoregressive quantile regression at level `tau`, floored at zero.
/// Histories too short for a regression fall back to the empirical
/// quantile, and an empty history yields zero.
pub fn sequential_quantile(history: &[f64], tau: f64, p_max: usize) -> Result<f64> {
    if history.is_empty() {
        return Ok(0.0);
    }
    if history.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let p_cap = p_max.min(history.len().saturating_sub(3));
    if history.len() < 3 {
        return Ok(empirical_quantile_lower(history, tau).max(0.0));
    }
    let model = fit_quantile_ar(history, tau, p_cap)?;
    let recent: Vec<f64> = history.iter().rev().take(model.order).copied().collect();
    model.predict(&recent)
}
