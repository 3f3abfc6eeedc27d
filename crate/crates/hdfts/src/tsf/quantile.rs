//! Autoregressive quantile regression on non-negative series (absolute
//! residuals), solved by iteratively reweighted least squares with a
//! smoothed check loss, with AIC-style lag selection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const DELTA_FLOOR: f64 = 1e-6;
const LOSS_FLOOR: f64 = 1e-300;

/// Fitted quantile autoregression.
#[derive(Debug, Clone)]
pub struct QuantileAr {
    /// Quantile level in (0, 1).
    pub tau: f64,
    /// Autoregressive order p.
    pub order: usize,
    pub intercept: f64,
    /// Lag coefficients, most recent lag first.
    pub coefficients: Vec<f64>,
    /// Mean check loss attained on the training sample.
    pub pinball_loss: f64,
    /// False when IRLS hit the iteration cap; the best iterate is kept.
    pub converged: bool,
}

/// Mean check (pinball) loss of residuals at level `tau`.
pub fn mean_pinball_loss(residuals: &[f64], tau: f64) -> f64 {
    let total: f64 = residuals
        .iter()
        .map(|&r| if r >= 0.0 { tau * r } else { (tau - 1.0) * r })
        .sum();
    total / residuals.len() as f64
}

/// IRLS minimization of the mean check loss for a fixed design.
/// Returns (beta, loss, converged).
fn irls(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> (DVector<f64>, f64, bool) {
    let n = y.len();
    let dim = x.ncols();

    let solve_weighted = |w: &[f64]| -> Option<DVector<f64>> {
        let mut xtx = DMatrix::<f64>::zeros(dim, dim);
        let mut xty = DVector::<f64>::zeros(dim);
        for i in 0..n {
            for a in 0..dim {
                xty[a] += w[i] * x[(i, a)] * y[i];
                for b in 0..dim {
                    xtx[(a, b)] += w[i] * x[(i, a)] * x[(i, b)];
                }
            }
        }
        for a in 0..dim {
            xtx[(a, a)] += 1e-12; // guards singular designs
        }
        nalgebra::Cholesky::new(xtx).map(|c| c.solve(&xty))
    };

    let loss_of = |beta: &DVector<f64>| -> f64 {
        let res: Vec<f64> = (0..n).map(|i| y[i] - (x.row(i) * beta)[0]).collect();
        mean_pinball_loss(&res, tau)
    };

    // start from ordinary least squares
    let mut beta = match solve_weighted(&vec![1.0; n]) {
        Some(b) => b,
        None => DVector::zeros(dim),
    };
    let mut best = beta.clone();
    let mut best_loss = loss_of(&beta);

    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut delta = 0.1 * scale;
    let mut converged = false;

    for _ in 0..MAX_ITER {
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let r: f64 = y[i] - (x.row(i) * &beta)[0];
            let asym = if r < 0.0 { 1.0 - tau } else { tau };
            weights[i] = asym / r.abs().max(delta);
        }
        let Some(next) = solve_weighted(&weights) else {
            break;
        };
        let step: f64 = (&next - &beta).amax();
        let loss = loss_of(&next);
        if loss < best_loss {
            best_loss = loss;
            best = next.clone();
        }
        beta = next;
        if step < 1e-11 * (1.0 + beta.amax()) && delta <= DELTA_FLOOR {
            converged = true;
            break;
        }
        delta = (delta * 0.5).max(DELTA_FLOOR);
    }
    (best, best_loss, converged)
}

/// Fits a quantile autoregression at level `tau`, selecting the order in
/// 0..=p_max by check-loss AIC on the common effective sample (ties toward
/// smaller p). Non-convergence keeps the best iterate and clears the
/// `converged` flag rather than failing.
pub fn fit_quantile_ar(series: &[f64], tau: f64, p_max: usize) -> Result<QuantileAr> {
    if !(0.0..1.0).contains(&tau) || tau <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "quantile level must lie in (0, 1), got {tau}"
        )));
    }
    let n = series.len();
    if n < p_max + 3 {
        return Err(Error::TooFewPoints { needed: p_max + 3, found: n });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    if series.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput(
            "quantile autoregression expects non-negative inputs".into(),
        ));
    }

    let mut best: Option<(QuantileAr, f64)> = None;
    for p in 0..=p_max {
        let (model, aic) = fit_single_order(series, tau, p, p_max);
        let better = best.as_ref().is_none_or(|(_, a)| aic < *a);
        if better {
            best = Some((model, aic));
        }
    }
    Ok(best.expect("at least the intercept model").0)
}

/// Fits one fixed-order model on the effective sample with targets
/// `p_max..n`; returns the model and its check-loss AIC.
fn fit_single_order(series: &[f64], tau: f64, p: usize, p_max: usize) -> (QuantileAr, f64) {
    let n = series.len();
    let n_eff = n - p_max;
    let dim = p + 1;
    let mut x = DMatrix::<f64>::zeros(n_eff, dim);
    let mut y = DVector::<f64>::zeros(n_eff);
    for (row, t) in (p_max..n).enumerate() {
        x[(row, 0)] = 1.0;
        for lag in 1..=p {
            x[(row, lag)] = series[t - lag];
        }
        y[row] = series[t];
    }
    let (beta, loss, converged) = irls(&x, &y, tau);
    let aic = n_eff as f64 * loss.max(LOSS_FLOOR).ln() + 2.0 * (p as f64 + 1.0);
    let model = QuantileAr {
        tau,
        order: p,
        intercept: beta[0],
        coefficients: (1..=p).map(|k| beta[k]).collect(),
        pinball_loss: loss,
        converged,
    };
    (model, aic)
}

/// Fits exactly order `p` with no selection; the effective sample drops the
/// first `p` observations.
pub fn fit_quantile_ar_fixed(series: &[f64], tau: f64, p: usize) -> Result<QuantileAr> {
    if !(0.0..1.0).contains(&tau) || tau <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "quantile level must lie in (0, 1), got {tau}"
        )));
    }
    let n = series.len();
    if n < p + 3 {
        return Err(Error::TooFewPoints { needed: p + 3, found: n });
    }
    if series.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "quantile autoregression expects finite non-negative inputs".into(),
        ));
    }
    Ok(fit_single_order(series, tau, p, p).0)
}

impl QuantileAr {
    /// One-step-ahead quantile from the `order` most recent values (latest
    /// first), floored at zero.
    pub fn predict(&self, recent: &[f64]) -> Result<f64> {
        if recent.len() != self.order {
            return Err(Error::Dimension(format!(
                "need {} recent values, got {}",
                self.order,
                recent.len()
            )));
        }
        let mut acc = self.intercept;
        for (k, &c) in self.coefficients.iter().enumerate() {
            acc += c * recent[k];
        }
        Ok(acc.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    /// Dense grid search over (intercept, slope) with local zooming.
    pub fn grid_search_loss(series: &[f64], tau: f64, p: usize) -> f64 {
        assert!(p <= 1);
        let p_max = p;
        let n = series.len();
        let rows: Vec<(f64, f64)> = (p_max..n)
            .map(|t| {
                let lag = if p == 1 { series[t - 1] } else { 0.0 };
                (lag, series[t])
            })
            .collect();
        let loss = |a: f64, b: f64| -> f64 {
            let res: Vec<f64> = rows.iter().map(|&(x, y)| y - a - b * x).collect();
            mean_pinball_loss(&res, tau)
        };
        let y_lo = series.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let y_hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let mut center_a = 0.5 * (y_lo + y_hi);
        let mut span_a = y_hi - y_lo;
        let mut center_b = 0.0;
        let mut span_b = if p == 1 { 6.0 } else { 0.0 };
        let mut best = f64::INFINITY;
        for _zoom in 0..6 {
            let mut best_a = center_a;
            let mut best_b = center_b;
            let steps = 80;
            for ia in 0..=steps {
                let a = center_a - span_a / 2.0 + span_a * ia as f64 / steps as f64;
                if p == 1 {
                    for ib in 0..=steps {
                        let b =
                            center_b - span_b / 2.0 + span_b * ib as f64 / steps as f64;
                        let l = loss(a, b);
                        if l < best {
                            best = l;
                            best_a = a;
                            best_b = b;
                        }
                    }
                } else {
                    let l = loss(a, 0.0);
                    if l < best {
                        best = l;
                        best_a = a;
                    }
                }
            }
            center_a = best_a;
            center_b = best_b;
            span_a /= 10.0;
            span_b /= 10.0;
        }
        best
    }

    #[test]
    fn constant_series_predicts_the_constant() {
        let series = vec![0.7; 12];
        for p_max in [0usize, 2] {
            let model = fit_quantile_ar(&series, 0.95, p_max).unwrap();
            let recent = vec![0.7; model.order];
            let q = model.predict(&recent).unwrap();
            assert!((q - 0.7).abs() < 1e-6, "p_max {p_max}: {q}");
            assert!(model.pinball_loss < 1e-8);
        }
    }

    #[test]
    fn uniform_sample_intercept_close_to_tau_quantile() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let series: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let model = fit_quantile_ar(&series, 0.95, 0).unwrap();
        assert_eq!(model.order, 0);
        assert!(
            (model.intercept - 0.95).abs() < 0.05,
            "intercept {}",
            model.intercept
        );
    }

    #[test]
    fn irls_matches_grid_search_on_tiny_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for n in [8usize, 10] {
            for p in [0usize, 1] {
                for tau in [0.5, 0.9, 0.95] {
                    let series: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                    let model = fit_quantile_ar_fixed(&series, tau, p).unwrap();
                    let oracle = grid_search_loss(&series, tau, p);
                    assert!(
                        model.pinball_loss <= oracle + 1e-4,
                        "n={n} p={p} tau={tau}: IRLS {} vs grid {oracle}",
                        model.pinball_loss
                    );
                }
            }
        }
    }

    #[test]
    fn predict_edge_cases() {
        let m0 = QuantileAr {
            tau: 0.95,
            order: 0,
            intercept: 0.4,
            coefficients: vec![],
            pinball_loss: 0.0,
            converged: true,
        };
        assert_eq!(m0.predict(&[]).unwrap(), 0.4);

        let neg = QuantileAr { intercept: -1.0, ..m0.clone() };
        assert_eq!(neg.predict(&[]).unwrap(), 0.0);

        let m1 = QuantileAr {
            tau: 0.95,
            order: 1,
            intercept: 0.1,
            coefficients: vec![0.5],
            pinball_loss: 0.0,
            converged: true,
        };
        assert!((m1.predict(&[0.2]).unwrap() - 0.2).abs() < 1e-15);
        assert!(m1.predict(&[]).is_err());
    }

    #[test]
    fn negative_inputs_are_rejected() {
        let series = vec![0.1, -0.2, 0.3, 0.4, 0.5];
        assert!(fit_quantile_ar(&series, 0.9, 0).is_err());
    }

    #[test]
    fn prediction_is_always_non_negative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let series: Vec<f64> = (0..25).map(|_| rng.random::<f64>() * 0.1).collect();
            let model = fit_quantile_ar(&series, 0.95, 2).unwrap();
            let recent: Vec<f64> = series.iter().rev().take(model.order).copied().collect();
            assert!(model.predict(&recent).unwrap() >= 0.0);
        }
    }
}
