//! CSV emission of effects, factor fits, forecasts, intervals, and reports.

use crate::eval::{ForecastSet, IntervalSet};
use crate::factor::FactorFit;
use crate::fanova::Decomposition;
use crate::panel::FunctionalPanel;

/// Effect curves, one row per grid point and one column per effect.
pub fn effects_to_csv(panel: &FunctionalPanel, dec: &Decomposition) -> String {
    let index = panel.index();
    let grid = panel.grid();
    let mut header = vec!["age".to_string(), "grand".to_string()];
    for unit in index.units() {
        header.push(format!("unit_{unit}"));
    }
    for group in index.groups() {
        header.push(format!("group_{group}"));
    }
    if dec.one_way.is_some() {
        for group in index.groups() {
            header.push(format!("grand_{group}"));
        }
        for group in index.groups() {
            for unit in index.units() {
                header.push(format!("unit_{group}_{unit}"));
            }
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for (j, age) in grid.points().iter().enumerate() {
        let mut row = vec![format!("{age}"), format!("{}", dec.two_way.grand[j])];
        for i in 0..index.n_units() {
            row.push(format!("{}", dec.two_way.unit[[i, j]]));
        }
        for g in 0..index.n_groups() {
            row.push(format!("{}", dec.two_way.group[[g, j]]));
        }
        if let Some(ow) = &dec.one_way {
            for g in 0..index.n_groups() {
                row.push(format!("{}", ow.grand[[g, j]]));
            }
            for g in 0..index.n_groups() {
                for i in 0..index.n_units() {
                    row.push(format!("{}", ow.unit[[g, i, j]]));
                }
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Long-format export of loadings, scores, and eigenvalues per group.
pub fn factors_to_csv(panel: &FunctionalPanel, fits: &[FactorFit]) -> String {
    let index = panel.index();
    let grid = panel.grid();
    let mut out = String::from("record,group,unit,year,factor,age,value\n");
    for fit in fits {
        for k in 0..fit.q {
            for (i, unit) in index.units().iter().enumerate() {
                for (j, age) in grid.points().iter().enumerate() {
                    out.push_str(&format!(
                        "loading,{},{unit},,{k},{age},{}\n",
                        fit.group,
                        fit.loadings[[i, k, j]]
                    ));
                }
            }
            for (t, year) in index.years().iter().take(fit.scores.nrows()).enumerate() {
                out.push_str(&format!(
                    "score,{},,{year},{k},,{}\n",
                    fit.group,
                    fit.scores[[t, k]]
                ));
            }
        }
        for (l, v) in fit.eigenvalues.iter().enumerate() {
            out.push_str(&format!("eigenvalue,{},,,{l},,{v}\n", fit.group));
        }
    }
    out
}

/// Point forecasts, one row per (group, unit, horizon, target year, age).
pub fn forecasts_to_csv(
    panel: &FunctionalPanel,
    forecasts: &ForecastSet,
    method: &str,
    engine: &str,
) -> String {
    let index = panel.index();
    let grid = panel.grid();
    let mut out =
        String::from("method,engine,group,unit,horizon,origin_year,target_year,age,log_forecast,forecast\n");
    for rec in &forecasts.records {
        let origin_year = index.years()[rec.origin];
        let target_year = index.years()[rec.target];
        for (g, group) in index.groups().iter().enumerate() {
            for (i, unit) in index.units().iter().enumerate() {
                for (j, age) in grid.points().iter().enumerate() {
                    out.push_str(&format!(
                        "{method},{engine},{group},{unit},{},{origin_year},{target_year},{age},{},{}\n",
                        rec.horizon,
                        rec.log[[g, i, j]],
                        rec.original[[g, i, j]]
                    ));
                }
            }
        }
    }
    out
}

/// Interval bounds, one row per (group, unit, horizon, target year, age).
pub fn intervals_to_csv(
    panel: &FunctionalPanel,
    intervals: &IntervalSet,
    method: &str,
    engine: &str,
) -> String {
    let index = panel.index();
    let grid = panel.grid();
    let mut out = String::from(
        "method,engine,interval,alpha,group,unit,horizon,origin_year,target_year,age,lower,upper\n",
    );
    for rec in &intervals.records {
        let origin_year = index.years()[rec.origin];
        let target_year = index.years()[rec.target];
        for (g, group) in index.groups().iter().enumerate() {
            for (i, unit) in index.units().iter().enumerate() {
                for (j, age) in grid.points().iter().enumerate() {
                    out.push_str(&format!(
                        "{method},{engine},{},{},{group},{unit},{},{origin_year},{target_year},{age},{},{}\n",
                        intervals.mode,
                        intervals.alpha,
                        rec.horizon,
                        rec.lower[[g, i, j]],
                        rec.upper[[g, i, j]]
                    ));
                }
            }
        }
    }
    out
}

fn lookup(labels: &[String], value: &str, what: &str) -> crate::error::Result<usize> {
    labels
        .iter()
        .position(|l| l == value)
        .ok_or_else(|| crate::error::Error::InvalidInput(format!("unknown {what} label {value:?}")))
}

/// Parses a forecasts CSV written by [`forecasts_to_csv`] back into a
/// [`ForecastSet`], returning the method and engine labels as well.
pub fn forecasts_from_csv(
    panel: &FunctionalPanel,
    text: &str,
) -> crate::error::Result<(ForecastSet, String, String)> {
    use crate::error::Error;
    use std::collections::BTreeMap;

    let index = panel.index();
    let grid = panel.grid();
    let (n_g, n_u, p) = (index.n_groups(), index.n_units(), grid.len());
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut cells: BTreeMap<(usize, usize), (ndarray::Array3<f64>, ndarray::Array3<f64>)> =
        BTreeMap::new();
    let mut method = String::new();
    let mut engine = String::new();
    for record in reader.records() {
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or("").to_string();
        method = field(0);
        engine = field(1);
        let g = lookup(index.groups(), &field(2), "group")?;
        let i = lookup(index.units(), &field(3), "unit")?;
        let h: usize = field(4)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad horizon {:?}", field(4))))?;
        let origin_year: i32 = field(5)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad origin year {:?}", field(5))))?;
        let age: f64 = field(7)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad age {:?}", field(7))))?;
        let log_v: f64 = field(8)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad log forecast {:?}", field(8))))?;
        let orig_v: f64 = field(9)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad forecast {:?}", field(9))))?;
        let origin = index
            .year_position(origin_year)
            .ok_or_else(|| Error::InvalidInput(format!("origin year {origin_year} not in panel")))?;
        let j = grid
            .position_of(age)
            .ok_or_else(|| Error::InvalidInput(format!("age {age} not on the grid")))?;
        let entry = cells.entry((h, origin)).or_insert_with(|| {
            (
                ndarray::Array3::zeros((n_g, n_u, p)),
                ndarray::Array3::zeros((n_g, n_u, p)),
            )
        });
        entry.0[[g, i, j]] = log_v;
        entry.1[[g, i, j]] = orig_v;
    }
    let records = cells
        .into_iter()
        .map(|((horizon, origin), (log, original))| crate::eval::ForecastRecord {
            horizon,
            origin,
            target: origin + horizon,
            log,
            original,
        })
        .collect();
    Ok((ForecastSet { records }, method, engine))
}

/// Parses an intervals CSV written by [`intervals_to_csv`] back into an
/// [`IntervalSet`].
pub fn intervals_from_csv(
    panel: &FunctionalPanel,
    text: &str,
) -> crate::error::Result<IntervalSet> {
    use crate::conformal::PiMode;
    use crate::error::Error;
    use std::collections::BTreeMap;

    let index = panel.index();
    let grid = panel.grid();
    let (n_g, n_u, p) = (index.n_groups(), index.n_units(), grid.len());
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut cells: BTreeMap<(usize, usize), (ndarray::Array3<f64>, ndarray::Array3<f64>)> =
        BTreeMap::new();
    let mut mode = PiMode::None;
    let mut alpha = 0.05;
    for record in reader.records() {
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or("").to_string();
        mode = field(2).parse()?;
        alpha = field(3)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad alpha {:?}", field(3))))?;
        let g = lookup(index.groups(), &field(4), "group")?;
        let i = lookup(index.units(), &field(5), "unit")?;
        let h: usize = field(6)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad horizon {:?}", field(6))))?;
        let origin_year: i32 = field(7)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad origin year {:?}", field(7))))?;
        let age: f64 = field(9)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad age {:?}", field(9))))?;
        let lower: f64 = field(10)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad lower bound {:?}", field(10))))?;
        let upper: f64 = field(11)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad upper bound {:?}", field(11))))?;
        let origin = index
            .year_position(origin_year)
            .ok_or_else(|| Error::InvalidInput(format!("origin year {origin_year} not in panel")))?;
        let j = grid
            .position_of(age)
            .ok_or_else(|| Error::InvalidInput(format!("age {age} not on the grid")))?;
        let entry = cells.entry((h, origin)).or_insert_with(|| {
            (
                ndarray::Array3::zeros((n_g, n_u, p)),
                ndarray::Array3::zeros((n_g, n_u, p)),
            )
        });
        entry.0[[g, i, j]] = lower;
        entry.1[[g, i, j]] = upper;
    }
    let records = cells
        .into_iter()
        .map(|((horizon, origin), (lower, upper))| crate::eval::IntervalRecord {
            horizon,
            origin,
            target: origin + horizon,
            lower,
            upper,
        })
        .collect();
    Ok(IntervalSet { mode, alpha, records })
}
