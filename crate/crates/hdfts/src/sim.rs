//! Synthetic panel generation: smooth mean effects, per-group rank-one
//! factor structure with AR(1) scores, and Gaussian observation noise.
//! Used by tests, benchmarks, and demo datasets.

use ndarray::Array4;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::panel::{AgeGrid, FunctionalPanel, PanelIndex, Scale};

/// Generator configuration. Two groups ("F", "M") are always emitted.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_units: usize,
    pub n_years: usize,
    pub grid_points: usize,
    /// Amplitude of the per-(unit, group) time-constant effects.
    pub eta_amplitude: f64,
    /// Amplitude of the factor loading curves.
    pub loading_amplitude: f64,
    /// AR(1) coefficient of the factor scores.
    pub ar_coefficient: f64,
    /// Standard deviation of the score innovations.
    pub score_innovation_sd: f64,
    /// Initial score value.
    pub score_start: f64,
    /// Standard deviation of the cellwise observation noise.
    pub noise_sd: f64,
    pub seed: u64,
    /// When set, score paths are demeaned over year indices
    /// `0..=center_scores_through`, which zeroes the one-way effects on
    /// that window.
    pub center_scores_through: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_units: 10,
            n_years: 40,
            grid_points: 30,
            eta_amplitude: 0.5,
            loading_amplitude: 0.6,
            ar_coefficient: 0.7,
            score_innovation_sd: 0.1,
            score_start: 2.0,
            noise_sd: 0.1,
            seed: 1,
            center_scores_through: None,
        }
    }
}

/// Grand-effect curve shaped like a log mortality profile.
fn grand_curve(s: f64) -> f64 {
    -6.0 + 4.5 * s.powf(1.3) + 0.4 * (3.0 * s).sin()
}

/// Generates a fully valid log-scale panel with two groups.
pub fn generate_panel(cfg: &SimConfig) -> FunctionalPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (n_g, n_u, n_t, p) = (2usize, cfg.n_units, cfg.n_years, cfg.grid_points);
    let svec = |j: usize| j as f64 / (p - 1).max(1) as f64;

    // unit effects: smooth random curves centered across units
    let mut alpha = vec![vec![0.0f64; p]; n_u];
    for row in alpha.iter_mut() {
        let c0 = rng.random::<f64>() - 0.5;
        let c1 = rng.random::<f64>() - 0.5;
        let phase = rng.random::<f64>() * std::f64::consts::PI;
        for (j, v) in row.iter_mut().enumerate() {
            let s = svec(j);
            *v = 0.4 * c0 + 0.3 * c1 * s + 0.2 * (2.0 * s + phase).sin();
        }
    }
    for j in 0..p {
        let mean: f64 = alpha.iter().map(|r| r[j]).sum::<f64>() / n_u as f64;
        for row in alpha.iter_mut() {
            row[j] -= mean;
        }
    }

    // group effects: opposite-signed smooth contrast
    let delta: Vec<Vec<f64>> = (0..n_g)
        .map(|g| {
            let sign = if g == 0 { -1.0 } else { 1.0 };
            (0..p)
                .map(|j| {
                    let s = svec(j);
                    sign * 0.25 * (0.5 + 0.5 * (std::f64::consts::PI * s).cos())
                })
                .collect()
        })
        .collect();

    // per-(unit, group) effects centered across units within each group
    let mut eta = vec![vec![vec![0.0f64; p]; n_u]; n_g];
    for block in eta.iter_mut() {
        for row in block.iter_mut() {
            let c0 = rng.random::<f64>() - 0.5;
            let phase = rng.random::<f64>() * std::f64::consts::PI;
            for (j, v) in row.iter_mut().enumerate() {
                let s = svec(j);
                *v = cfg.eta_amplitude * (c0 + 0.5 * (3.0 * s + phase).cos());
            }
        }
        for j in 0..p {
            let mean: f64 = block.iter().map(|r| r[j]).sum::<f64>() / n_u as f64;
            for row in block.iter_mut() {
                row[j] -= mean;
            }
        }
    }

    // rank-one loading curves, order-one magnitude
    let mut loading = vec![vec![vec![0.0f64; p]; n_u]; n_g];
    for block in loading.iter_mut() {
        for row in block.iter_mut() {
            let c0 = 0.6 + 0.4 * rng.random::<f64>();
            let phase = rng.random::<f64>() * std::f64::consts::PI;
            for (j, v) in row.iter_mut().enumerate() {
                let s = svec(j);
                *v = cfg.loading_amplitude * (c0 + 0.3 * (2.0 * s + phase).sin());
            }
        }
    }

    // AR(1) score path per group
    let mut scores = vec![vec![0.0f64; n_t]; n_g];
    for path in scores.iter_mut() {
        let mut g_t = cfg.score_start;
        for slot in path.iter_mut() {
            *slot = g_t;
            g_t = cfg.ar_coefficient * g_t + cfg.score_innovation_sd * normal.sample(&mut rng);
        }
        if let Some(through) = cfg.center_scores_through {
            let end = through.min(n_t - 1);
            let mean: f64 = path[..=end].iter().sum::<f64>() / (end + 1) as f64;
            for v in path.iter_mut() {
                *v -= mean;
            }
        }
    }

    let mut values = Array4::zeros((n_g, n_u, n_t, p));
    for g in 0..n_g {
        for i in 0..n_u {
            for t in 0..n_t {
                for j in 0..p {
                    let s = svec(j);
                    let noise = if cfg.noise_sd > 0.0 {
                        cfg.noise_sd * normal.sample(&mut rng)
                    } else {
                        0.0
                    };
                    values[[g, i, t, j]] = grand_curve(s)
                        + alpha[i][j]
                        + delta[g][j]
                        + eta[g][i][j]
                        + loading[g][i][j] * scores[g][t]
                        + noise;
                }
            }
        }
    }

    let index = PanelIndex::new(
        vec!["F".into(), "M".into()],
        (0..n_u).map(|i| format!("U{i:02}")).collect(),
        (2000..2000 + n_t as i32).collect(),
    )
    .expect("valid synthetic index");
    let grid = AgeGrid::new((0..p).map(|j| j as f64).collect()).expect("valid synthetic grid");
    FunctionalPanel::from_values(index, grid, values, Scale::LogRate)
        .expect("synthetic panel is finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let cfg = SimConfig::default();
        let a = generate_panel(&cfg);
        let b = generate_panel(&cfg);
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn shape_and_scale() {
        let cfg = SimConfig { n_units: 3, n_years: 8, grid_points: 5, ..Default::default() };
        let panel = generate_panel(&cfg);
        assert_eq!(panel.values().dim(), (2, 3, 8, 5));
        assert_eq!(panel.scale(), Scale::LogRate);
        assert!(panel.fully_valid());
    }

    #[test]
    fn centered_scores_zero_the_one_way_effects() {
        let cfg = SimConfig {
            eta_amplitude: 0.0,
            noise_sd: 0.0,
            center_scores_through: Some(7),
            n_years: 8,
            n_units: 4,
            grid_points: 6,
            ..Default::default()
        };
        let panel = generate_panel(&cfg);
        let fx = crate::fanova::estimate_two_way(&panel).unwrap();
        let ow = crate::fanova::estimate_one_way_all(&fx.residual).unwrap();
        for v in ow.unit.iter() {
            assert!(v.abs() < 1e-10, "one-way unit effect {v}");
        }
    }
}
