//! Additive non-seasonal exponential smoothing: simple, Holt, and damped
//! Holt variants, fit by one-step squared error and selected by AICc.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtsVariant {
    Ses,
    Holt,
    DampedHolt,
}

#[derive(Debug, Clone)]
pub struct EtsModel {
    pub variant: EtsVariant,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub phi: Option<f64>,
    /// Final smoothed level.
    pub level: f64,
    /// Final smoothed trend, absent for SES.
    pub trend: Option<f64>,
    /// Corrected information criterion used for selection.
    pub aicc: f64,
}

const PARAM_LO: f64 = 1e-4;
const PARAM_HI: f64 = 1.0 - 1e-4;
const VAR_FLOOR: f64 = 1e-300;

/// One-step sum of squared errors plus the final state.
fn sse_and_state(series: &[f64], variant: EtsVariant, params: &[f64]) -> (f64, f64, Option<f64>) {
    match variant {
        EtsVariant::Ses => {
            let alpha = params[0];
            let mut level = series[0];
            let mut sse = 0.0;
            for &y in &series[1..] {
                let e = y - level;
                sse += e * e;
                level += alpha * e;
            }
            (sse, level, None)
        }
        EtsVariant::Holt | EtsVariant::DampedHolt => {
            let alpha = params[0];
            let beta = params[1];
            let phi = if variant == EtsVariant::DampedHolt { params[2] } else { 1.0 };
            let mut level = series[0];
            let mut trend = series[1] - series[0];
            let mut sse = 0.0;
            for &y in &series[1..] {
                let forecast = level + phi * trend;
                let e = y - forecast;
                sse += e * e;
                let new_level = alpha * y + (1.0 - alpha) * (level + phi * trend);
                trend = beta * (new_level - level) + (1.0 - beta) * phi * trend;
                level = new_level;
            }
            (sse, level, Some(trend))
        }
    }
}

/// Coarse grid search followed by coordinate-wise refinement.
fn optimize(series: &[f64], variant: EtsVariant) -> (Vec<f64>, f64) {
    let n_params = match variant {
        EtsVariant::Ses => 1,
        EtsVariant::Holt => 2,
        EtsVariant::DampedHolt => 3,
    };
    let coarse = [0.02, 0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 0.98];
    let phi_coarse = [0.6, 0.75, 0.85, 0.92, 0.98];

    let eval = |params: &[f64]| sse_and_state(series, variant, params).0;

    let mut best_params = vec![0.5; n_params];
    let mut best_sse = f64::INFINITY;
    match variant {
        EtsVariant::Ses => {
            for &a in &coarse {
                let sse = eval(&[a]);
                if sse < best_sse {
                    best_sse = sse;
                    best_params = vec![a];
                }
            }
        }
        EtsVariant::Holt => {
            for &a in &coarse {
                for &b in &coarse {
                    if b > a {
                        continue; // conventional stability restriction
                    }
                    let sse = eval(&[a, b]);
                    if sse < best_sse {
                        best_sse = sse;
                        best_params = vec![a, b];
                    }
                }
            }
        }
        EtsVariant::DampedHolt => {
            for &a in &coarse {
                for &b in &coarse {
                    if b > a {
                        continue;
                    }
                    for &f in &phi_coarse {
                        let sse = eval(&[a, b, f]);
                        if sse < best_sse {
                            best_sse = sse;
                            best_params = vec![a, b, f];
                        }
                    }
                }
            }
        }
    }

    // local refinement: shrinking coordinate steps
    let mut step = 0.06;
    for _round in 0..5 {
        for k in 0..n_params {
            for dir in [-1.0, 1.0] {
                let mut cand = best_params.clone();
                cand[k] = (cand[k] + dir * step).clamp(PARAM_LO, PARAM_HI);
                if variant != EtsVariant::Ses && cand[1] > cand[0] {
                    continue;
                }
                let sse = eval(&cand);
                if sse < best_sse {
                    best_sse = sse;
                    best_params = cand;
                }
            }
        }
        step /= 3.0;
    }
    (best_params, best_sse)
}

fn criterion(sse: f64, n_eff: usize, k: usize) -> (f64, f64) {
    let n = n_eff as f64;
    let sigma2 = (sse / n).max(VAR_FLOOR);
    let aic = n * sigma2.ln() + 2.0 * k as f64;
    let denom = n - k as f64 - 1.0;
    let aicc = if denom > 0.0 {
        aic + 2.0 * (k as f64) * (k as f64 + 1.0) / denom
    } else {
        f64::INFINITY
    };
    (aic, aicc)
}

/// Mean forecast path of a fitted model at horizons `1..=h`.
fn forecast_path(model: &EtsModel, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h);
    match model.variant {
        EtsVariant::Ses => {
            for _ in 0..h {
                out.push(model.level);
            }
        }
        EtsVariant::Holt => {
            let b = model.trend.unwrap_or(0.0);
            for step in 1..=h {
                out.push(model.level + step as f64 * b);
            }
        }
        EtsVariant::DampedHolt => {
            let b = model.trend.unwrap_or(0.0);
            let phi = model.phi.unwrap_or(1.0);
            let mut damp = 0.0;
            let mut pow = 1.0;
            for _step in 1..=h {
                pow *= phi;
                damp += pow;
                out.push(model.level + damp * b);
            }
        }
    }
    out
}

/// Fits the three variants, selects by AICc (plain AIC when the AICc
/// correction is undefined for every variant), and forecasts `horizon`
/// steps ahead. A constant series reduces to SES and yields constant
/// forecasts.
pub fn fit_ets(series: &[f64], horizon: usize) -> Result<(EtsModel, Vec<f64>)> {
    if series.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, found: series.len() });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let n_eff = series.len() - 1;

    let mut candidates = Vec::new();
    for variant in [EtsVariant::Ses, EtsVariant::Holt, EtsVariant::DampedHolt] {
        let (params, sse) = optimize(series, variant);
        let k = match variant {
            EtsVariant::Ses => 2,        // alpha + level state
            EtsVariant::Holt => 4,       // alpha, beta + level, trend
            EtsVariant::DampedHolt => 5, // alpha, beta, phi + level, trend
        };
        let (aic, aicc) = criterion(sse, n_eff, k);
        let (_, level, trend) = sse_and_state(series, variant, &params);
        let model = EtsModel {
            variant,
            alpha: params[0],
            beta: params.get(1).copied(),
            phi: params.get(2).copied(),
            level,
            trend,
            aicc,
        };
        candidates.push((model, aic, aicc));
    }

    let all_aicc_infinite = candidates.iter().all(|(_, _, aicc)| aicc.is_infinite());
    let selected = candidates
        .into_iter()
        .min_by(|a, b| {
            let (ka, kb) = if all_aicc_infinite { (a.1, b.1) } else { (a.2, b.2) };
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("three candidates");
    let mut model = selected.0;
    if all_aicc_infinite {
        model.aicc = selected.1; // fall back to the criterion actually used
    }
    let forecasts = forecast_path(&model, horizon);
    Ok((model, forecasts))
}
