//! Curve smoothing: discrete penalized least squares with a k-th order
//! difference penalty (Whittaker–Henderson form), followed by an isotonic
//! projection beyond a pivot age.
//!
//! Masked cells get weight zero and are imputed by the fit. The penalty
//! weight can be fixed or chosen by generalized cross-validation over a
//! log-spaced grid. Monotonicity beyond the pivot is enforced by the
//! pool-adjacent-violators algorithm applied to the fitted values, which
//! keeps the unconstrained fit a closed-form linear smoother.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{AgeGrid, FunctionalPanel, Scale};

/// Penalty weight: fixed, or selected per curve by generalized
/// cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    Auto,
}

/// Observation weighting. Exposure-based weights are unavailable in
/// rate-only sources, so the inverse-variance proxy currently assigns unit
/// weight to every valid cell, same as `Uniform`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Uniform,
    InverseVarianceProxy,
}

#[derive(Debug, Clone)]
pub struct SmootherConfig {
    pub lambda: LambdaChoice,
    /// Order of the difference penalty, 1..=3.
    pub penalty_order: usize,
    /// Age from which fitted curves are projected to be non-decreasing;
    /// `None` disables the constraint.
    pub monotone_from: Option<f64>,
    pub weight_mode: WeightMode,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            lambda: LambdaChoice::Auto,
            penalty_order: 2,
            monotone_from: Some(65.0),
            weight_mode: WeightMode::Uniform,
        }
    }
}

impl SmootherConfig {
    fn validate(&self, grid: &AgeGrid) -> Result<()> {
        if let LambdaChoice::Fixed(l) = self.lambda {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "penalty weight must be finite and >= 0, got {l}"
                )));
            }
        }
        if !(1..=3).contains(&self.penalty_order) {
            return Err(Error::InvalidInput(format!(
                "penalty order must be 1, 2, or 3, got {}",
                self.penalty_order
            )));
        }
        if let Some(pivot) = self.monotone_from {
            let lo = grid.points()[0];
            let hi = *grid.points().last().unwrap();
            if !(lo..=hi).contains(&pivot) {
                return Err(Error::InvalidInput(format!(
                    "monotone pivot {pivot} lies outside the grid range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Number of log-spaced candidate penalties scanned by GCV.
const GCV_GRID_SIZE: usize = 25;
const GCV_LAMBDA_LO: f64 = 1e-4;
const GCV_LAMBDA_HI: f64 = 1e4;

/// Smooths one masked curve over `grid`.
///
/// The fit minimizes the weighted squared error plus `lambda` times the sum
/// of squared `penalty_order`-th differences, then values at grid points at
/// or beyond the pivot are replaced by their isotonic (non-decreasing)
/// projection. The result has no missing values: masked cells are imputed
/// by the penalized fit.
pub fn smooth_curve(
    y: &[f64],
    mask: &[bool],
    grid: &AgeGrid,
    cfg: &SmootherConfig,
) -> Result<Vec<f64>> {
    cfg.validate(grid)?;
    let p = grid.len();
    if y.len() != p || mask.len() != p {
        return Err(Error::Dimension(format!(
            "curve length {} / mask length {} do not match grid length {p}",
            y.len(),
            mask.len()
        )));
    }
    let n_valid = mask.iter().filter(|&&m| m).count();
    if n_valid < cfg.penalty_order + 1 {
        return Err(Error::TooFewPoints { needed: cfg.penalty_order + 1, found: n_valid });
    }
    for j in 0..p {
        if mask[j] && !y[j].is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite value {} at valid grid point {}",
                y[j], j
            )));
        }
    }

    let weights: Vec<f64> = match cfg.weight_mode {
        WeightMode::Uniform | WeightMode::InverseVarianceProxy => {
            mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
        }
    };

    let lambda = match cfg.lambda {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::Auto => gcv_lambda(y, &weights, cfg.penalty_order)?,
    };

    let mut fitted = whittaker_fit(y, &weights, cfg.penalty_order, lambda)?;

    if let Some(pivot) = cfg.monotone_from {
        if let Some(j0) = grid.first_at_or_above(pivot) {
            pava_non_decreasing(&mut fitted[j0..]);
        }
    }
    Ok(fitted)
}

/// Applies [`smooth_curve`] to every (group, unit, year) slice of a
/// log-scale panel; the output is fully valid.
pub fn smooth_panel(panel: &FunctionalPanel, cfg: &SmootherConfig) -> Result<FunctionalPanel> {
    if panel.scale() != Scale::LogRate {
        return Err(Error::InvalidInput(
            "smoothing expects a log-scale panel".into(),
        ));
    }
    cfg.validate(panel.grid())?;
    let (n_g, n_u, n_t, p) = panel.values().dim();

    let slices: Vec<(usize, usize, usize)> = (0..n_g)
        .flat_map(|g| (0..n_u).flat_map(move |i| (0..n_t).map(move |t| (g, i, t))))
        .collect();

    let results: Vec<Result<Vec<f64>>> = slices
        .par_iter()
        .map(|&(g, i, t)| {
            let mut y = vec![0.0; p];
            let mut mask = vec![false; p];
            for j in 0..p {
                y[j] = panel.value(g, i, t, j);
                mask[j] = panel.is_valid(g, i, t, j);
            }
            smooth_curve(&y, &mask, panel.grid(), cfg).map_err(|e| {
                Error::Numeric(format!(
                    "smoothing failed for group {}, unit {}, year {}: {e}",
                    panel.index().groups()[g],
                    panel.index().units()[i],
                    panel.index().years()[t]
                ))
            })
        })
        .collect();

    let mut values = ndarray::Array4::zeros((n_g, n_u, n_t, p));
    for (&(g, i, t), fitted) in slices.iter().zip(results) {
        let fitted = fitted?;
        for j in 0..p {
            values[[g, i, t, j]] = fitted[j];
        }
    }
    FunctionalPanel::from_values(
        panel.index().clone(),
        panel.grid().clone(),
        values,
        Scale::LogRate,
    )
}

/// `D'D` for the k-th order difference matrix on `p` points.
fn penalty_matrix(p: usize, order: usize) -> DMatrix<f64> {
    // Rows of D are the k-th difference stencils (binomial coefficients with
    // alternating signs).
    let mut stencil = vec![1.0f64];
    for _ in 0..order {
        let mut next = vec![0.0; stencil.len() + 1];
        for (i, &c) in stencil.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c;
        }
        stencil = next;
    }
    let rows = p.saturating_sub(order);
    let mut dtd = DMatrix::zeros(p, p);
    for r in 0..rows {
        for a in 0..stencil.len() {
            for b in 0..stencil.len() {
                dtd[(r + a, r + b)] += stencil[a] * stencil[b];
            }
        }
    }
    dtd
}

/// Solves `(W + lambda D'D) z = W y` for the fitted curve.
fn whittaker_fit(y: &[f64], weights: &[f64], order: usize, lambda: f64) -> Result<Vec<f64>> {
    let p = y.len();
    let mut a = penalty_matrix(p, order) * lambda;
    let mut rhs = DVector::zeros(p);
    for j in 0..p {
        a[(j, j)] += weights[j];
        if weights[j] > 0.0 {
            rhs[j] = weights[j] * y[j];
        }
    }
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::Numeric(
            "penalized system is singular; a positive penalty is required to impute masked cells"
                .into(),
        )
    })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// GCV score n·RSS / (n − tr(H))², evaluated over valid points only.
fn gcv_score(y: &[f64], weights: &[f64], order: usize, lambda: f64) -> Option<f64> {
    let p = y.len();
    let mut a = penalty_matrix(p, order) * lambda;
    let mut rhs = DVector::zeros(p);
    let mut n = 0.0;
    for j in 0..p {
        a[(j, j)] += weights[j];
        if weights[j] > 0.0 {
            rhs[j] = weights[j] * y[j];
            n += 1.0;
        }
    }
    let chol = Cholesky::new(a)?;
    let fitted = chol.solve(&rhs);
    let inv = chol.inverse();
    let mut trace = 0.0;
    let mut rss = 0.0;
    for j in 0..p {
        if weights[j] > 0.0 {
            trace += weights[j] * inv[(j, j)];
            let r = y[j] - fitted[j];
            rss += weights[j] * r * r;
        }
    }
    let denom = n - trace;
    if denom <= f64::EPSILON {
        return None;
    }
    Some(n * rss / (denom * denom))
}

/// Minimizes GCV over a log-spaced grid of penalties.
fn gcv_lambda(y: &[f64], weights: &[f64], order: usize) -> Result<f64> {
    let log_lo = GCV_LAMBDA_LO.ln();
    let log_hi = GCV_LAMBDA_HI.ln();
    let mut best: Option<(f64, f64)> = None;
    for k in 0..GCV_GRID_SIZE {
        let frac = k as f64 / (GCV_GRID_SIZE - 1) as f64;
        let lambda = (log_lo + frac * (log_hi - log_lo)).exp();
        if let Some(score) = gcv_score(y, weights, order, lambda) {
            let better = best.is_none_or(|(s, _)| score < s);
            if better {
                best = Some((score, lambda));
            }
        }
    }
    best.map(|(_, l)| l)
        .ok_or_else(|| Error::Numeric("GCV failed at every candidate penalty".into()))
}

/// In-place pool-adjacent-violators projection onto non-decreasing
/// sequences (uniform weights).
pub fn pava_non_decreasing(values: &mut [f64]) {
    let n = values.len();
    if n < 2 {
        return;
    }
    // (block mean, block length)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &v in values.iter() {
        let mut mean = v;
        let mut len = 1usize;
        while let Some(&(prev_mean, prev_len)) = blocks.last() {
            if prev_mean > mean {
                mean = (prev_mean * prev_len as f64 + mean * len as f64)
                    / (prev_len + len) as f64;
                len += prev_len;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push((mean, len));
    }
    let mut j = 0;
    for (mean, len) in blocks {
        for _ in 0..len {
            values[j] = mean;
            j += 1;
        }
    }
}
