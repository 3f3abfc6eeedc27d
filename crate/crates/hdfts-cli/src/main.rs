//! Command-line interface: decomposition, backtesting, interval
//! construction, report recomputation, and the full benchmark grid, all
//! driven by per-unit CSV files and an optional key-value config.
//!
//! Thread count is controlled only by the RAYON_NUM_THREADS environment
//! variable.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::{load_config, RunConfig};
use hdfts::conformal::PiMode;
use hdfts::eval::{
    compute_report, expanding_backtest, render_report_csv, render_report_text, reproduce,
    BacktestConfig,
};
use hdfts::export;
use hdfts::factor::fit_factors;
use hdfts::fanova::decompose;
use hdfts::panel::{load_panel, make_split, AgeGrid, CsvSchema, FunctionalPanel};
use hdfts::smoothing::smooth_panel;

#[derive(Parser)]
#[command(
    name = "hdfts",
    about = "Forecasting toolkit for panels of age-specific curves",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose the panel into effect curves and factor fits
    /// (effects.csv, factors.csv).
    Decompose {
        /// Directory of per-unit CSV files (Year, Age, one rate column per
        /// group).
        #[arg(long)]
        data: PathBuf,
        /// Key-value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Expanding-window backtest: point forecasts, optional intervals,
    /// and the accuracy report.
    Backtest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Backtest with prediction intervals (defaults to split-sd when the
    /// config does not set a mode).
    Intervals {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute report.csv and report.txt from a saved run directory.
    Report {
        /// Run directory holding forecasts.csv (and intervals.csv).
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Full benchmark grid: both methods, both engines, all interval
    /// modes, with qualitative-ordering checks reported as PASS/WARN.
    Reproduce {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Decompose { data, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let panel = prepare_panel(&data, &cfg)?;
            run_decompose(&panel, &cfg, &out)
        }
        Command::Backtest { data, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let panel = prepare_panel(&data, &cfg)?;
            run_backtest(&panel, &cfg, &out)
        }
        Command::Intervals { data, config, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if cfg.pi_mode == PiMode::None {
                cfg.pi_mode = PiMode::SplitSd;
            }
            let panel = prepare_panel(&data, &cfg)?;
            run_backtest(&panel, &cfg, &out)
        }
        Command::Report { run, data, config } => {
            let cfg = load_config(config.as_deref())?;
            let panel = prepare_panel(&data, &cfg)?;
            run_report(&panel, &cfg, &run)
        }
        Command::Reproduce { data, config, out } => {
            let cfg = load_config(config.as_deref())?;
            run_reproduce(&data, &cfg, &out)
        }
    }
}

fn csv_files(data: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(data)
        .with_context(|| format!("reading data directory {}", data.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no CSV files in {}", data.display());
    }
    Ok(files)
}

/// Derives the age grid and rate columns from the first file when the
/// config does not pin them.
fn derive_schema(first: &Path, cfg: &RunConfig) -> Result<(AgeGrid, CsvSchema)> {
    let text = std::fs::read_to_string(first)
        .with_context(|| format!("reading {}", first.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty CSV file")?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();

    let groups: Vec<String> = match &cfg.groups {
        Some(g) => g.clone(),
        None => columns
            .iter()
            .filter(|c| !c.eq_ignore_ascii_case("year") && !c.eq_ignore_ascii_case("age"))
            .map(|c| c.to_string())
            .collect(),
    };
    if groups.is_empty() {
        bail!("no rate columns found in {}", first.display());
    }
    let schema = CsvSchema::with_groups(&groups);

    let grid = match cfg.ages {
        Some((lo, hi)) => AgeGrid::integer_range(lo, hi)?,
        None => {
            let age_ix = columns
                .iter()
                .position(|c| c.eq_ignore_ascii_case("age"))
                .context("no Age column")?;
            let mut ages: Vec<f64> = Vec::new();
            for line in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let field = line.split(',').nth(age_ix).unwrap_or("").trim();
                let field = field.strip_suffix('+').unwrap_or(field);
                if let Ok(age) = field.parse::<f64>() {
                    if !ages.contains(&age) {
                        ages.push(age);
                    }
                }
            }
            ages.sort_by(|a, b| a.partial_cmp(b).unwrap());
            AgeGrid::new(ages)?
        }
    };
    Ok((grid, schema))
}

/// Loads, log-transforms, and smooths the panel.
fn prepare_panel(data: &Path, cfg: &RunConfig) -> Result<FunctionalPanel> {
    let files = csv_files(data)?;
    let (grid, schema) = derive_schema(&files[0], cfg)?;
    let raw = load_panel(&files, &schema, &grid)?;
    let logged = raw.to_log()?;
    Ok(smooth_panel(&logged, &cfg.smoother)?)
}

fn write(out_dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_decompose(panel: &FunctionalPanel, cfg: &RunConfig, out: &Path) -> Result<()> {
    let dec = decompose(panel, cfg.method)?;
    write(out, "effects.csv", &export::effects_to_csv(panel, &dec))?;
    let fits: Result<Vec<_>> = panel
        .index()
        .groups()
        .iter()
        .enumerate()
        .map(|(g, label)| {
            Ok(fit_factors(
                dec.stochastic().group_values(g),
                panel.grid(),
                label,
                &cfg.factor,
            )?)
        })
        .collect();
    write(out, "factors.csv", &export::factors_to_csv(panel, &fits?))?;
    Ok(())
}

fn backtest_config(panel: &FunctionalPanel, cfg: &RunConfig) -> Result<BacktestConfig> {
    let split = make_split(panel.index().years(), cfg.split_proportions)?;
    let first_train_end = cfg
        .first_train_end
        .unwrap_or_else(|| *split.validation_years().last().unwrap());
    let mut bt = BacktestConfig::new(first_train_end, cfg.method, cfg.engine);
    bt.engine = cfg.engine;
    bt.pi_mode = cfg.pi_mode;
    bt.alpha = cfg.alpha;
    bt.split_proportions = cfg.split_proportions;
    bt.factor = cfg.factor;
    bt.quantile_p_max = cfg.quantile_p_max;
    if cfg.horizons.is_empty() {
        let test_len = panel
            .index()
            .years()
            .iter()
            .filter(|&&y| y > first_train_end)
            .count();
        bt.horizons = (1..=test_len.clamp(1, 10)).collect();
    } else {
        bt.horizons = cfg.horizons.clone();
    }
    Ok(bt)
}

fn run_backtest(panel: &FunctionalPanel, cfg: &RunConfig, out: &Path) -> Result<()> {
    let bt = backtest_config(panel, cfg)?;
    let output = expanding_backtest(panel, &bt)?;
    let method = bt.mode.to_string();
    let engine = bt.engine.to_string();
    write(
        out,
        "forecasts.csv",
        &export::forecasts_to_csv(panel, &output.forecasts, &method, &engine),
    )?;
    if let Some(intervals) = &output.intervals {
        write(
            out,
            "intervals.csv",
            &export::intervals_to_csv(panel, intervals, &method, &engine),
        )?;
    }
    let report = compute_report(panel, &output, &bt)?;
    write(out, "report.csv", &render_report_csv(&report))?;
    write(out, "report.txt", &render_report_text(&report))?;
    if !output.skipped.is_empty() {
        println!(
            "skipped {} (horizon, origin) pairs whose target lies outside the panel",
            output.skipped.len()
        );
    }
    Ok(())
}

fn run_report(panel: &FunctionalPanel, cfg: &RunConfig, run_dir: &Path) -> Result<()> {
    let fc_path = run_dir.join("forecasts.csv");
    let fc_text = std::fs::read_to_string(&fc_path)
        .with_context(|| format!("reading {}", fc_path.display()))?;
    let (forecasts, method, engine) = export::forecasts_from_csv(panel, &fc_text)?;

    let iv_path = run_dir.join("intervals.csv");
    let intervals = if iv_path.exists() {
        let text = std::fs::read_to_string(&iv_path)?;
        Some(export::intervals_from_csv(panel, &text)?)
    } else {
        None
    };

    let mut bt = backtest_config(panel, cfg)?;
    bt.mode = match method.as_str() {
        "TWA+OWA+FFM" => hdfts::fanova::DecompositionMode::TwaOwa,
        "TWA+FFM" => hdfts::fanova::DecompositionMode::TwaOnly,
        other => bail!("unknown method {other:?} in forecasts.csv"),
    };
    bt.engine = engine.parse()?;
    let horizons: std::collections::BTreeSet<usize> =
        forecasts.records.iter().map(|r| r.horizon).collect();
    bt.horizons = horizons.into_iter().collect();
    if let Some(iv) = &intervals {
        bt.pi_mode = iv.mode;
        bt.alpha = iv.alpha;
    } else {
        bt.pi_mode = PiMode::None;
    }

    let output = hdfts::eval::BacktestOutput { forecasts, intervals, skipped: Vec::new() };
    let report = compute_report(panel, &output, &bt)?;
    write(run_dir, "report.csv", &render_report_csv(&report))?;
    write(run_dir, "report.txt", &render_report_text(&report))?;
    Ok(())
}

fn run_reproduce(data: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    let files = csv_files(data)?;
    let (grid, schema) = derive_schema(&files[0], cfg)?;
    let raw = load_panel(&files, &schema, &grid)?;
    let outcome = reproduce(&raw, &cfg.smoother, cfg.alpha)?;
    write(out, "report.csv", &render_report_csv(&outcome.report))?;
    write(out, "tables.txt", &outcome.tables)?;
    write(out, "assertions.txt", &(outcome.soft_assertions.join("\n") + "\n"))?;
    println!("qualitative orderings:");
    for line in &outcome.soft_assertions {
        println!("  {line}");
    }
    Ok(())
}
