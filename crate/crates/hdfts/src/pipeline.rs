//! The forecasting pipeline: FANOVA decomposition of a training window,
//! per-group factor fits on the stochastic residual, per-coordinate score
//! extrapolation, and assembly of the integrated point forecast
//! (deterministic effects plus the factor reconstruction), with a cache of
//! fits across expanding-window origins.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array3, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factor::{fit_factors, FactorFit, FactorSelectConfig};
use crate::fanova::{decompose, DecompositionMode};
use crate::panel::{FunctionalPanel, Scale};
use crate::tsf::{forecast_series, EngineKind};

/// Pipeline configuration shared by every expanding-window refit.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub mode: DecompositionMode,
    pub engine: EngineKind,
    pub factor: FactorSelectConfig,
}

impl PipelineConfig {
    pub fn new(mode: DecompositionMode, engine: EngineKind) -> Self {
        Self { mode, engine, factor: FactorSelectConfig::default() }
    }
}

/// A pipeline fitted on one training window, retaining only what
/// forecasting needs.
#[derive(Debug)]
pub struct FittedPipeline {
    /// Deterministic forecast component per (group, unit, grid point).
    pub deterministic: Array3<f64>,
    /// Per-group factor fits on the stochastic residual.
    pub factor_fits: Vec<FactorFit>,
    /// Per-group score forecasts, shape (max_horizon, q_g).
    score_forecasts: Vec<ndarray::Array2<f64>>,
    /// Index of the last year in the fit window.
    pub window_end: usize,
    pub max_horizon: usize,
}

impl FittedPipeline {
    /// Fits the pipeline on panel years `0..=window_end` and precomputes
    /// score forecasts for horizons `1..=max_horizon`.
    pub fn fit(
        panel: &FunctionalPanel,
        cfg: &PipelineConfig,
        window_end: usize,
        max_horizon: usize,
    ) -> Result<Self> {
        if panel.scale() != Scale::LogRate {
            return Err(Error::InvalidInput("pipeline expects a log-scale panel".into()));
        }
        let window = if window_end + 1 == panel.index().n_years() {
            panel.clone()
        } else {
            panel.window(window_end)?
        };
        let decomposition = decompose(&window, cfg.mode)?;

        let (n_g, n_u, _n_t, p) = window.values().dim();
        let mut deterministic = Array3::zeros((n_g, n_u, p));
        for g in 0..n_g {
            for i in 0..n_u {
                let curve = decomposition.deterministic_curve(g, i);
                deterministic
                    .index_axis_mut(Axis(0), g)
                    .row_mut(i)
                    .assign(&curve);
            }
        }

        let stochastic = decomposition.stochastic();
        let mut factor_fits = Vec::with_capacity(n_g);
        let mut score_forecasts = Vec::with_capacity(n_g);
        for (g, label) in window.index().groups().iter().enumerate() {
            let fit = fit_factors(
                stochastic.group_values(g),
                window.grid(),
                label,
                &cfg.factor,
            )?;
            let mut fc = ndarray::Array2::zeros((max_horizon, fit.q));
            for k in 0..fit.q {
                let series: Vec<f64> = fit.scores.column(k).iter().copied().collect();
                let path = forecast_series(&series, max_horizon, cfg.engine)?;
                for (h, v) in path.into_iter().enumerate() {
                    fc[[h, k]] = v;
                }
            }
            factor_fits.push(fit);
            score_forecasts.push(fc);
        }

        Ok(Self {
            deterministic,
            factor_fits,
            score_forecasts,
            window_end,
            max_horizon,
        })
    }

    /// Integrated log-scale forecast for horizon `h` (1-based), shape
    /// (G, N, p): deterministic effects plus the factor reconstruction at
    /// the extrapolated scores.
    pub fn forecast_log(&self, h: usize) -> Result<Array3<f64>> {
        if h == 0 || h > self.max_horizon {
            return Err(Error::InvalidInput(format!(
                "horizon {h} outside 1..={}",
                self.max_horizon
            )));
        }
        let mut out = self.deterministic.clone();
        for (g, fit) in self.factor_fits.iter().enumerate() {
            let scores: Vec<f64> = self.score_forecasts[g].row(h - 1).iter().copied().collect();
            let stochastic = fit.reconstruct(&scores)?;
            let mut block = out.index_axis_mut(Axis(0), g);
            block += &stochastic;
        }
        Ok(out)
    }

    /// Original-scale forecast: exponential back-transform of
    /// [`Self::forecast_log`].
    pub fn forecast_original(&self, h: usize) -> Result<Array3<f64>> {
        let mut out = self.forecast_log(h)?;
        out.mapv_inplace(f64::exp);
        Ok(out)
    }
}

/// Cache of pipeline fits keyed by window end, shared by the backtest and
/// the interval machinery. Fits are immutable once computed.
pub struct PipelineCache<'a> {
    panel: &'a FunctionalPanel,
    cfg: PipelineConfig,
    max_horizon: usize,
    fits: BTreeMap<usize, Arc<FittedPipeline>>,
}

impl<'a> PipelineCache<'a> {
    pub fn new(panel: &'a FunctionalPanel, cfg: PipelineConfig, max_horizon: usize) -> Self {
        Self { panel, cfg, max_horizon, fits: BTreeMap::new() }
    }

    /// Fits any missing origins in parallel.
    pub fn precompute(&mut self, origins: impl IntoIterator<Item = usize>) -> Result<()> {
        let missing: Vec<usize> = origins
            .into_iter()
            .filter(|o| !self.fits.contains_key(o))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let computed: Vec<(usize, Result<FittedPipeline>)> = missing
            .par_iter()
            .map(|&o| {
                (
                    o,
                    FittedPipeline::fit(self.panel, &self.cfg, o, self.max_horizon),
                )
            })
            .collect();
        for (o, fit) in computed {
            self.fits.insert(o, Arc::new(fit?));
        }
        Ok(())
    }

    /// The fit whose window ends at `origin`, computing it if needed.
    pub fn fit_at(&mut self, origin: usize) -> Result<Arc<FittedPipeline>> {
        if let Some(fit) = self.fits.get(&origin) {
            return Ok(Arc::clone(fit));
        }
        let fit = Arc::new(FittedPipeline::fit(
            self.panel,
            &self.cfg,
            origin,
            self.max_horizon,
        )?);
        self.fits.insert(origin, Arc::clone(&fit));
        Ok(fit)
    }
}
