//! Autoregression with intercept, fit by conditional least squares with
//! AIC order selection, plus a differencing wrapper used as the ARIMA
//! surrogate for near-unit-root series.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const VAR_FLOOR: f64 = 1e-300;
/// Differencing is applied when the raw series' AR(1) coefficient exceeds
/// this threshold.
const UNIT_ROOT_THRESHOLD: f64 = 0.98;

#[derive(Debug, Clone)]
pub struct ArModel {
    /// Autoregressive order p.
    pub order: usize,
    pub intercept: f64,
    /// Lag coefficients, most recent lag first.
    pub coefficients: Vec<f64>,
    /// Innovation variance estimate.
    pub sigma2: f64,
    pub aic: f64,
}

impl ArModel {
    /// One-step prediction from the most recent observations (latest
    /// first).
    fn predict(&self, recent: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (k, &c) in self.coefficients.iter().enumerate() {
            acc += c * recent[k];
        }
        acc
    }
}

/// Least squares fit of AR(p) with intercept on the common effective
/// sample with targets `p_max..n`.
fn fit_order(series: &[f64], p: usize, p_max: usize) -> Option<(ArModel, f64, usize)> {
    let n = series.len();
    let n_eff = n - p_max;
    let dim = p + 1;
    let mut xtx = DMatrix::<f64>::zeros(dim, dim);
    let mut xty = DVector::<f64>::zeros(dim);
    for t in p_max..n {
        let mut row = Vec::with_capacity(dim);
        row.push(1.0);
        for lag in 1..=p {
            row.push(series[t - lag]);
        }
        for a in 0..dim {
            xty[a] += row[a] * series[t];
            for b in 0..dim {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    let chol = nalgebra::Cholesky::new(xtx)?;
    let beta = chol.solve(&xty);

    let mut rss = 0.0;
    for t in p_max..n {
        let mut pred = beta[0];
        for lag in 1..=p {
            pred += beta[lag] * series[t - lag];
        }
        let e = series[t] - pred;
        rss += e * e;
    }
    let sigma2 = rss / n_eff as f64;
    let aic = n_eff as f64 * sigma2.max(VAR_FLOOR).ln() + 2.0 * (p as f64 + 1.0);
    let model = ArModel {
        order: p,
        intercept: beta[0],
        coefficients: (1..=p).map(|k| beta[k]).collect(),
        sigma2,
        aic,
    };
    Some((model, rss, n_eff))
}

/// Iterates the fitted recursion `horizon` steps ahead.
fn forecast_recursion(model: &ArModel, series: &[f64], horizon: usize) -> Vec<f64> {
    let mut history: Vec<f64> = series.to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let recent: Vec<f64> = history
            .iter()
            .rev()
            .take(model.order)
            .copied()
            .collect();
        let next = model.predict(&recent);
        out.push(next);
        history.push(next);
    }
    out
}

/// Fits AR(p) for p in 0..=p_max on the common effective sample, selects
/// by AIC (ties toward smaller p), and forecasts `horizon` steps ahead.
/// Candidates with a singular design (e.g. a constant series with p >= 1)
/// are skipped, so such series fall back to p = 0.
pub fn fit_ar(series: &[f64], p_max: usize, horizon: usize) -> Result<(ArModel, Vec<f64>)> {
    let n = series.len();
    if n < p_max + 2 {
        return Err(Error::TooFewPoints { needed: p_max + 2, found: n });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let mut best: Option<ArModel> = None;
    for p in 0..=p_max {
        if let Some((model, _, _)) = fit_order(series, p, p_max) {
            let better = best.as_ref().is_none_or(|b| model.aic < b.aic);
            if better {
                best = Some(model);
            }
        }
    }
    let model = best.ok_or_else(|| Error::Numeric("every AR candidate was singular".into()))?;
    let forecasts = forecast_recursion(&model, series, horizon);
    Ok((model, forecasts))
}

#[derive(Debug, Clone)]
pub struct ArimaSurrogate {
    pub differenced: bool,
    pub model: ArModel,
}

/// AR-with-intercept forecaster that first differences the series when its
/// fitted AR(1) coefficient exceeds 0.98, then integrates the differenced
/// forecasts back.
pub fn fit_arima_surrogate(
    series: &[f64],
    p_max: usize,
    horizon: usize,
) -> Result<(ArimaSurrogate, Vec<f64>)> {
    let n = series.len();
    if n < 4 {
        return Err(Error::TooFewPoints { needed: 4, found: n });
    }
    let ar1_coef = fit_order(series, 1, 1)
        .map(|(m, _, _)| m.coefficients[0])
        .unwrap_or(0.0);

    if ar1_coef > UNIT_ROOT_THRESHOLD {
        let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
        let p_eff = p_max.min(diffs.len().saturating_sub(2));
        let (model, diff_fc) = fit_ar(&diffs, p_eff, horizon)?;
        let mut out = Vec::with_capacity(horizon);
        let mut last = *series.last().unwrap();
        for d in diff_fc {
            last += d;
            out.push(last);
        }
        Ok((ArimaSurrogate { differenced: true, model }, out))
    } else {
        let p_eff = p_max.min(n.saturating_sub(2));
        let (model, fc) = fit_ar(series, p_eff, horizon)?;
        Ok((ArimaSurrogate { differenced: false, model }, fc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn white_noise_selects_order_zero_and_forecasts_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let series: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng)).collect();
        let p_max = 4;
        let (model, fc) = fit_ar(&series, p_max, 3).unwrap();
        assert_eq!(model.order, 0, "white noise should select p = 0");
        let eff_mean: f64 =
            series[p_max..].iter().sum::<f64>() / (series.len() - p_max) as f64;
        for v in fc {
            assert!((v - eff_mean).abs() < 1e-10);
        }
    }

    #[test]
    fn ar1_coefficient_is_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut series = vec![0.0f64];
        for _ in 1..2000 {
            let prev = *series.last().unwrap();
            series.push(0.8 * prev + normal.sample(&mut rng));
        }
        let (model, _) = fit_ar(&series, 3, 1).unwrap();
        assert!(model.order >= 1);
        assert!(
            (model.coefficients[0] - 0.8).abs() < 0.1,
            "coefficient {}",
            model.coefficients[0]
        );
    }

    #[test]
    fn constant_series_falls_back_to_order_zero() {
        let series = vec![5.5; 20];
        let (model, fc) = fit_ar(&series, 3, 4).unwrap();
        assert_eq!(model.order, 0);
        for v in fc {
            assert!((v - 5.5).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_equivariance_of_forecasts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut series = vec![0.2f64];
        for _ in 1..60 {
            let prev = *series.last().unwrap();
            series.push(0.5 * prev + normal.sample(&mut rng));
        }
        let shifted: Vec<f64> = series.iter().map(|v| v + 11.0).collect();
        let (_, fc) = fit_ar(&series, 3, 4).unwrap();
        let (_, fc_shift) = fit_ar(&shifted, 3, 4).unwrap();
        for (a, b) in fc.iter().zip(&fc_shift) {
            assert!((b - a - 11.0).abs() < 1e-8);
        }
    }

    #[test]
    fn near_unit_root_series_is_differenced() {
        // a pure trend has AR(1) coefficient ~1
        let series: Vec<f64> = (0..40).map(|t| 2.0 + 0.5 * t as f64).collect();
        let (info, fc) = fit_arima_surrogate(&series, 3, 3).unwrap();
        assert!(info.differenced);
        // differenced series is constant 0.5 -> forecasts continue the trend
        for (k, v) in fc.iter().enumerate() {
            let expect = 2.0 + 0.5 * (40 + k) as f64;
            assert!((v - expect).abs() < 1e-6, "step {k}: {v} vs {expect}");
        }
    }

    #[test]
    fn stationary_series_is_not_differenced() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let series: Vec<f64> = (0..50).map(|_| normal.sample(&mut rng)).collect();
        let (info, _) = fit_arima_surrogate(&series, 3, 2).unwrap();
        assert!(!info.differenced);
    }

    #[test]
    fn too_short_series_errors() {
        assert!(fit_ar(&[1.0, 2.0], 1, 1).is_err());
    }
}
