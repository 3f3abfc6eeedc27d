//! Functional ANOVA decompositions of a smoothed panel.
//!
//! The two-way decomposition splits every curve into a grand effect, a unit
//! (row) effect, a group (column) effect, and a residual process that still
//! carries the unit-by-group interaction. A nested per-group one-way
//! decomposition then extracts a per-group grand effect and per-unit mean
//! effects from that residual, leaving a remainder with zero time-mean per
//! (unit, group). All effects are sample means, so reconstruction is exact
//! by telescoping.

use ndarray::{Array1, Array2, Array3, Array4, Axis};

use crate::error::{Error, Result};
use crate::panel::{FunctionalPanel, Scale};

/// Which deterministic mean structure the pipeline removes before factor
/// modeling: the two-way effects alone, or additionally the nested one-way
/// effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompositionMode {
    /// Two-way effects plus nested per-group one-way effects.
    TwaOwa,
    /// Two-way effects only; the one-way terms are fixed at zero.
    TwaOnly,
}

impl std::fmt::Display for DecompositionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecompositionMode::TwaOwa => write!(f, "TWA+OWA+FFM"),
            DecompositionMode::TwaOnly => write!(f, "TWA+FFM"),
        }
    }
}

/// Two-way effects: grand mean curve, per-unit and per-group deviation
/// curves, and the residual panel left after removing them.
#[derive(Debug, Clone)]
pub struct TwoWayEffects {
    /// Grand effect over the grid, length p.
    pub grand: Array1<f64>,
    /// Unit (row) effects, shape (N, p); sums to zero over units.
    pub unit: Array2<f64>,
    /// Group (column) effects, shape (G, p); sums to zero over groups.
    pub group: Array2<f64>,
    /// Residual process including the interaction, shape (G, N, T, p).
    pub residual: FunctionalPanel,
}

/// Nested one-way effects estimated per group on the two-way residual.
#[derive(Debug, Clone)]
pub struct OneWayEffects {
    /// Per-group grand effect, shape (G, p).
    pub grand: Array2<f64>,
    /// Per-group unit effects, shape (G, N, p).
    pub unit: Array3<f64>,
    /// Remainder process, shape (G, N, T, p); zero time-mean per (unit,
    /// group, grid point).
    pub remainder: FunctionalPanel,
}

/// Result of [`decompose`]: the deterministic effects and the stochastic
/// process handed to the factor model.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub mode: DecompositionMode,
    pub two_way: TwoWayEffects,
    pub one_way: Option<OneWayEffects>,
}

impl Decomposition {
    /// The stochastic residual process: the one-way remainder under
    /// [`DecompositionMode::TwaOwa`], the two-way residual otherwise.
    pub fn stochastic(&self) -> &FunctionalPanel {
        match &self.one_way {
            Some(ow) => &ow.remainder,
            None => &self.two_way.residual,
        }
    }

    /// Deterministic part of the forecast curve for (group g, unit i),
    /// length p.
    pub fn deterministic_curve(&self, g: usize, i: usize) -> Array1<f64> {
        let mut curve = self.two_way.grand.clone();
        curve += &self.two_way.unit.row(i);
        curve += &self.two_way.group.row(g);
        if let Some(ow) = &self.one_way {
            curve += &ow.grand.row(g);
            curve += &ow.unit.index_axis(Axis(0), g).row(i);
        }
        curve
    }
}

fn require_fully_valid(panel: &FunctionalPanel, what: &str) -> Result<()> {
    if !panel.fully_valid() {
        return Err(Error::MaskedInput(format!(
            "{what} requires a fully valid panel; smooth or impute first"
        )));
    }
    Ok(())
}

/// Estimates the two-way effects by sample means: the grand effect averages
/// over (unit, group, year); unit and group effects average over the
/// complementary axes and subtract the grand effect.
pub fn estimate_two_way(panel: &FunctionalPanel) -> Result<TwoWayEffects> {
    require_fully_valid(panel, "two-way decomposition")?;
    if panel.scale() != Scale::LogRate {
        return Err(Error::InvalidInput(
            "two-way decomposition expects a log-scale panel".into(),
        ));
    }
    let (n_g, n_u, _n_t, _p) = panel.values().dim();
    if n_g < 2 || n_u < 2 {
        return Err(Error::InvalidInput(format!(
            "two-way decomposition needs at least 2 groups and 2 units, got ({n_g}, {n_u})"
        )));
    }
    let values = panel.values();

    // mean over (g, i, t) -> p
    let grand = values
        .mean_axis(Axis(0))
        .unwrap()
        .mean_axis(Axis(0))
        .unwrap()
        .mean_axis(Axis(0))
        .unwrap();
    // mean over (g, t) -> (N, p)
    let unit = values.mean_axis(Axis(0)).unwrap().mean_axis(Axis(1)).unwrap() - &grand;
    // mean over (i, t) -> (G, p)
    let group = values.mean_axis(Axis(1)).unwrap().mean_axis(Axis(1)).unwrap() - &grand;

    let mut residual = values.clone();
    for ((g, i, _t, j), v) in residual.indexed_iter_mut() {
        *v -= grand[j] + unit[[i, j]] + group[[g, j]];
    }
    let residual = FunctionalPanel::from_values(
        panel.index().clone(),
        panel.grid().clone(),
        residual,
        Scale::LogRate,
    )?;
    Ok(TwoWayEffects { grand, unit, group, residual })
}

/// One-way effects for a single group of the residual process: the grand
/// effect averages over (unit, year), unit effects are time means minus the
/// grand effect, and the remainder is what is left.
pub fn estimate_one_way(
    residual: &FunctionalPanel,
    group: &str,
) -> Result<(Array1<f64>, Array2<f64>, Array3<f64>)> {
    require_fully_valid(residual, "one-way decomposition")?;
    let g = residual
        .index()
        .group_position(group)
        .ok_or_else(|| Error::UnknownGroup(group.to_string()))?;
    let block = residual.group_values(g); // (N, T, p)

    let grand = block.mean_axis(Axis(0)).unwrap().mean_axis(Axis(0)).unwrap();
    let unit = block.mean_axis(Axis(1)).unwrap() - &grand;
    let mut remainder = block.to_owned();
    for ((i, _t, j), v) in remainder.indexed_iter_mut() {
        *v -= grand[j] + unit[[i, j]];
    }
    Ok((grand, unit, remainder))
}

/// Runs [`estimate_one_way`] for every group and assembles the results.
pub fn estimate_one_way_all(residual: &FunctionalPanel) -> Result<OneWayEffects> {
    let (n_g, n_u, n_t, p) = residual.values().dim();
    let mut grand = Array2::zeros((n_g, p));
    let mut unit = Array3::zeros((n_g, n_u, p));
    let mut remainder = Array4::zeros((n_g, n_u, n_t, p));
    for (g, label) in residual.index().groups().to_vec().iter().enumerate() {
        let (gr, un, rem) = estimate_one_way(residual, label)?;
        grand.row_mut(g).assign(&gr);
        unit.index_axis_mut(Axis(0), g).assign(&un);
        remainder.index_axis_mut(Axis(0), g).assign(&rem);
    }
    let remainder = FunctionalPanel::from_values(
        residual.index().clone(),
        residual.grid().clone(),
        remainder,
        residual.scale(),
    )?;
    Ok(OneWayEffects { grand, unit, remainder })
}

/// Full decomposition under the requested mode.
pub fn decompose(panel: &FunctionalPanel, mode: DecompositionMode) -> Result<Decomposition> {
    let two_way = estimate_two_way(panel)?;
    let one_way = match mode {
        DecompositionMode::TwaOwa => Some(estimate_one_way_all(&two_way.residual)?),
        DecompositionMode::TwaOnly => None,
    };
    Ok(Decomposition { mode, two_way, one_way })
}
