//! Property tests for the core algebraic invariants.

use ndarray::Array4;
use proptest::prelude::*;

use hdfts::conformal::{calibrate_split, ScaleMode};
use hdfts::fanova::{decompose, DecompositionMode};
use hdfts::panel::{make_split, AgeGrid, FunctionalPanel, PanelIndex, Scale};
use hdfts::smoothing::pava_non_decreasing;
use hdfts::tsf::{fit_ar, QuantileAr};

fn log_panel(values: Array4<f64>) -> FunctionalPanel {
    let (g, u, t, p) = values.dim();
    let index = PanelIndex::new(
        (0..g).map(|k| format!("G{k}")).collect(),
        (0..u).map(|k| format!("U{k}")).collect(),
        (0..t as i32).collect(),
    )
    .unwrap();
    let grid = AgeGrid::new((0..p).map(|i| i as f64).collect()).unwrap();
    FunctionalPanel::from_values(index, grid, values, Scale::LogRate).unwrap()
}

proptest! {
    #[test]
    fn split_partitions_are_disjoint_exhaustive_chronological(
        t in 3usize..80,
        start in -200i32..200,
        a in 1u32..8,
        b in 1u32..8,
        c in 1u32..8,
    ) {
        let years: Vec<i32> = (start..start + t as i32).collect();
        let total = (a + b + c) as f64;
        let props = (a as f64 / total, b as f64 / total, c as f64 / total);
        match make_split(&years, props) {
            Ok(plan) => {
                let mut all = plan.train_years().to_vec();
                all.extend_from_slice(plan.validation_years());
                all.extend_from_slice(plan.test_years());
                prop_assert_eq!(all, years);
            }
            Err(_) => {
                // only legitimate when some window would round to empty
                let min_quota = [props.0, props.1, props.2]
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(t as f64 * min_quota < 2.0);
            }
        }
    }

    #[test]
    fn log_round_trip_restores_rates(
        rates in proptest::collection::vec(1e-8f64..10.0, 24)
    ) {
        let values = Array4::from_shape_vec((2, 2, 3, 2), rates.clone()).unwrap();
        let index = PanelIndex::new(
            vec!["F".into(), "M".into()],
            vec!["a".into(), "b".into()],
            vec![0, 1, 2],
        ).unwrap();
        let grid = AgeGrid::new(vec![0.0, 1.0]).unwrap();
        let panel = FunctionalPanel::from_values(index, grid, values, Scale::RawRate).unwrap();
        let logged = panel.to_log().unwrap();
        for (back, orig) in logged.values().iter().zip(&rates) {
            prop_assert!((back.exp() - orig).abs() <= 1e-12 * orig.abs());
        }
    }

    #[test]
    fn pava_is_monotone_idempotent_and_mean_preserving(
        values in proptest::collection::vec(-100.0f64..100.0, 1..40)
    ) {
        let mut fit = values.clone();
        pava_non_decreasing(&mut fit);
        for w in fit.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        let mut again = fit.clone();
        pava_non_decreasing(&mut again);
        for (a, b) in fit.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let mean_in: f64 = values.iter().sum::<f64>() / values.len() as f64;
        let mean_out: f64 = fit.iter().sum::<f64>() / fit.len() as f64;
        prop_assert!((mean_in - mean_out).abs() < 1e-9);
    }

    #[test]
    fn decomposition_reconstructs_and_centers(
        cells in proptest::collection::vec(-5.0f64..5.0, 2 * 3 * 4 * 2),
        mode_flag in proptest::bool::ANY,
    ) {
        let values = Array4::from_shape_vec((2, 3, 4, 2), cells).unwrap();
        let panel = log_panel(values);
        let mode = if mode_flag { DecompositionMode::TwaOwa } else { DecompositionMode::TwaOnly };
        let dec = decompose(&panel, mode).unwrap();
        for ((g, i, t, j), v) in panel.values().indexed_iter() {
            let det = dec.deterministic_curve(g, i);
            let rebuilt = det[j] + dec.stochastic().value(g, i, t, j);
            prop_assert!((rebuilt - v).abs() < 1e-10);
        }
        if mode_flag {
            // stochastic process has zero time-mean per (unit, group, age)
            let (n_g, n_u, n_t, p) = panel.values().dim();
            for g in 0..n_g {
                for i in 0..n_u {
                    for j in 0..p {
                        let mean: f64 = (0..n_t)
                            .map(|t| dec.stochastic().value(g, i, t, j))
                            .sum::<f64>() / n_t as f64;
                        prop_assert!(mean.abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn quantile_prediction_is_non_negative(
        intercept in -5.0f64..5.0,
        coef in -3.0f64..3.0,
        recent in 0.0f64..4.0,
    ) {
        let model = QuantileAr {
            tau: 0.95,
            order: 1,
            intercept,
            coefficients: vec![coef],
            pinball_loss: 0.0,
            converged: true,
        };
        prop_assert!(model.predict(&[recent]).unwrap() >= 0.0);
    }

    #[test]
    fn ar_forecasts_are_shift_equivariant(
        base in proptest::collection::vec(-2.0f64..2.0, 20..40),
        shift in -50.0f64..50.0,
    ) {
        let shifted: Vec<f64> = base.iter().map(|v| v + shift).collect();
        let (_, fc) = fit_ar(&base, 3, 4).unwrap();
        let (_, fc_shifted) = fit_ar(&shifted, 3, 4).unwrap();
        for (a, b) in fc.iter().zip(&fc_shifted) {
            prop_assert!((b - a - shift).abs() < 1e-7 * (1.0 + shift.abs()));
        }
    }

    #[test]
    fn calibration_attains_the_minimal_coverage_gap(
        cells in proptest::collection::vec(-1.0f64..1.0, 5 * 4),
        alpha in 0.02f64..0.5,
    ) {
        let residuals = ndarray::Array2::from_shape_vec((5, 4), cells).unwrap();
        let cal = calibrate_split(residuals.view(), ScaleMode::Sd, alpha).unwrap();
        prop_assert!(cal.xi > 0.0);
        let coverage = |xi: f64| -> f64 {
            let mut covered = 0usize;
            for r in 0..5 {
                for j in 0..4 {
                    if residuals[[r, j]].abs() <= xi * cal.gamma[j] {
                        covered += 1;
                    }
                }
            }
            covered as f64 / 20.0
        };
        let attained = (coverage(cal.xi) - (1.0 - alpha)).abs();
        for r in 0..5 {
            for j in 0..4 {
                if cal.gamma[j] > 0.0 {
                    let cand = residuals[[r, j]].abs() / cal.gamma[j];
                    let gap = (coverage(cand) - (1.0 - alpha)).abs();
                    prop_assert!(attained <= gap + 1e-12);
                }
            }
        }
    }
}
