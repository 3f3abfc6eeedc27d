//! Functional factor model for a group's residual process.
//!
//! The T×T inner-product matrix of residual curves is eigendecomposed; the
//! leading eigenvectors scaled by √T become factor scores, and loading
//! curves follow by least squares under the score normalization
//! (1/T) Σ_t G_t G_t' = I. The factor count minimizes an eigenvalue
//! criterion with a linear penalty.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3, ArrayView3};

use crate::error::{Error, Result};
use crate::panel::AgeGrid;

/// Default cap on the scanned factor count.
pub const DEFAULT_Q_MAX_CAP: usize = 25;

/// Configuration for factor-count selection.
#[derive(Debug, Clone, Copy, Default)]
pub struct FactorSelectConfig {
    /// Largest factor count scanned; defaults to `min(T, 25)`.
    pub q_max: Option<usize>,
    /// Penalty per extra factor; defaults to `max(T, N)^(-1/2)`.
    pub phi: Option<f64>,
    /// Fixed factor count, bypassing selection.
    pub q_override: Option<usize>,
}

impl FactorSelectConfig {
    pub fn with_override(q: usize) -> Self {
        Self { q_override: Some(q), ..Self::default() }
    }

    fn resolved_q_max(&self, t: usize) -> usize {
        self.q_max.unwrap_or_else(|| t.min(DEFAULT_Q_MAX_CAP)).clamp(1, t)
    }

    fn resolved_phi(&self, t: usize, n: usize) -> f64 {
        self.phi.unwrap_or_else(|| (t.max(n) as f64).powf(-0.5))
    }
}

/// Fitted factor model for one group.
#[derive(Debug, Clone)]
pub struct FactorFit {
    pub group: String,
    /// Selected factor count.
    pub q: usize,
    /// Factor scores, shape (T, q); satisfies (1/T) Σ G G' = I.
    pub scores: Array2<f64>,
    /// Loading curves, shape (N, q, p).
    pub loadings: Array3<f64>,
    /// Leading eigenvalues of Δ/T (non-increasing), up to q_max entries.
    pub eigenvalues: Vec<f64>,
    /// Inner-product matrix Δ, shape (T, T).
    pub delta: Array2<f64>,
}

/// Inner-product matrix Δ with entries
/// Δ[t, t'] = (1/N) Σ_i ∫ R_it(u) R_it'(u) du, the integral taken by
/// trapezoidal quadrature on `grid`. Exactly symmetric by construction.
pub fn inner_product_matrix(r: ArrayView3<'_, f64>, grid: &AgeGrid) -> Result<Array2<f64>> {
    let (n_units, n_years, p) = r.dim();
    if p != grid.len() {
        return Err(Error::Dimension(format!(
            "residual grid length {p} does not match grid length {}",
            grid.len()
        )));
    }
    if p < 2 {
        return Err(Error::InvalidInput(
            "quadrature needs at least 2 grid points".into(),
        ));
    }
    if n_units == 0 || n_years == 0 {
        return Err(Error::InvalidInput("empty residual process".into()));
    }
    let w = grid.trapezoid_weights();
    let mut delta = Array2::zeros((n_years, n_years));
    for t in 0..n_years {
        for s in t..n_years {
            let mut acc = 0.0;
            for i in 0..n_units {
                let mut inner = 0.0;
                for j in 0..p {
                    inner += w[j] * r[[i, t, j]] * r[[i, s, j]];
                }
                acc += inner;
            }
            let v = acc / n_units as f64;
            delta[[t, s]] = v;
            delta[[s, t]] = v;
        }
    }
    Ok(delta)
}

/// Factor count from the penalized eigenvalue criterion: the minimizer ℓ*
/// of ν_ℓ + ℓφ over 1..=q_max (ties toward smaller ℓ) minus one, clamped to
/// at least 1 so the stochastic component stays forecastable. An override
/// in `cfg` wins.
///
/// `eigs` must be the non-increasing eigenvalues of Δ/T; `n_units` enters
/// only through the default penalty.
pub fn select_q(eigs: &[f64], cfg: &FactorSelectConfig, n_units: usize) -> usize {
    if let Some(q) = cfg.q_override {
        return q.max(1);
    }
    let t = eigs.len().max(1);
    let q_max = cfg.resolved_q_max(t).min(eigs.len()).max(1);
    let phi = cfg.resolved_phi(t, n_units);
    let mut best_l = 1usize;
    let mut best = f64::INFINITY;
    for l in 1..=q_max {
        let objective = eigs[l - 1] + l as f64 * phi;
        if objective < best {
            best = objective;
            best_l = l;
        }
    }
    if best_l == 1 {
        // criterion minimizer minus one would be zero factors, which makes
        // the stochastic forecast identically zero
        log::warn!("factor-count criterion suggested 0 factors; clamping to 1");
    }
    best_l.saturating_sub(1).max(1)
}

/// Fits the factor model to one group's residual process of shape
/// (N, T, p).
pub fn fit_factors(
    r: ArrayView3<'_, f64>,
    grid: &AgeGrid,
    group: &str,
    cfg: &FactorSelectConfig,
) -> Result<FactorFit> {
    let (n_units, n_years, p) = r.dim();
    if n_years < 2 {
        return Err(Error::InvalidInput(format!(
            "factor model needs at least 2 years, got {n_years}"
        )));
    }
    let delta = inner_product_matrix(r, grid)?;

    let mat = DMatrix::from_fn(n_years, n_years, |a, b| delta[[a, b]]);
    let eigen = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n_years).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let t_f = n_years as f64;
    let eig_of_scaled: Vec<f64> = order.iter().map(|&k| eigen.eigenvalues[k] / t_f).collect();

    if let Some(&min_e) = eig_of_scaled.last() {
        let max_e = eig_of_scaled[0].abs();
        if min_e < -1e-8 * max_e.max(1.0) {
            return Err(Error::Numeric(format!(
                "inner-product matrix is not positive semidefinite: min eigenvalue {min_e}"
            )));
        }
    }

    let q_max = cfg.resolved_q_max(n_years);
    let eigenvalues: Vec<f64> = eig_of_scaled.iter().take(q_max).copied().collect();
    let q = select_q(&eigenvalues, cfg, n_units).min(n_years);

    // scores: top-q eigenvectors scaled by sqrt(T), sign fixed so each
    // column's largest-magnitude entry is positive (first index on ties)
    let mut scores = Array2::zeros((n_years, q));
    for k in 0..q {
        let col = eigen.eigenvectors.column(order[k]);
        let mut lead = 0usize;
        let mut lead_abs = -1.0;
        for (t, &v) in col.iter().enumerate() {
            if v.abs() > lead_abs {
                lead_abs = v.abs();
                lead = t;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for t in 0..n_years {
            scores[[t, k]] = sign * col[t] * t_f.sqrt();
        }
    }

    // loadings via least squares under the normalization:
    // Λ_i(u) = (1/T) Σ_t R_it(u) G_t
    let mut loadings = Array3::zeros((n_units, q, p));
    for i in 0..n_units {
        for k in 0..q {
            for j in 0..p {
                let mut acc = 0.0;
                for t in 0..n_years {
                    acc += r[[i, t, j]] * scores[[t, k]];
                }
                loadings[[i, k, j]] = acc / t_f;
            }
        }
    }

    Ok(FactorFit {
        group: group.to_string(),
        q,
        scores,
        loadings,
        eigenvalues,
        delta,
    })
}

impl FactorFit {
    /// Curves Σ_k Λ_ik(u) · scores_k for every unit, shape (N, p).
    pub fn reconstruct(&self, scores_t: &[f64]) -> Result<Array2<f64>> {
        if scores_t.len() != self.q {
            return Err(Error::Dimension(format!(
                "score vector length {} does not match factor count {}",
                scores_t.len(),
                self.q
            )));
        }
        let (n_units, _q, p) = self.loadings.dim();
        let mut out = Array2::zeros((n_units, p));
        for i in 0..n_units {
            for j in 0..p {
                let mut acc = 0.0;
                for k in 0..self.q {
                    acc += self.loadings[[i, k, j]] * scores_t[k];
                }
                out[[i, j]] = acc;
            }
        }
        Ok(out)
    }

    /// In-sample reconstruction for year index `t`.
    pub fn reconstruct_in_sample(&self, t: usize) -> Result<Array2<f64>> {
        let row: Vec<f64> = self.scores.row(t).iter().copied().collect();
        self.reconstruct(&row)
    }
}
