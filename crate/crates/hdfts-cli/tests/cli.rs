//! End-to-end runs of the binary against a synthetic CSV dataset.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use hdfts::sim::{generate_panel, SimConfig};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_hdfts")
}

/// Writes a small synthetic dataset (per-unit CSVs) and returns the data
/// directory path.
fn write_dataset(dir: &Path) -> Vec<PathBuf> {
    let panel = generate_panel(&SimConfig {
        n_units: 3,
        n_years: 18,
        grid_points: 6,
        noise_sd: 0.05,
        seed: 4242,
        ..Default::default()
    });
    let mut files = Vec::new();
    for (i, unit) in panel.index().units().iter().enumerate() {
        let path = dir.join(format!("{unit}.csv"));
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "Year,Age,F,M").unwrap();
        for (t, year) in panel.index().years().iter().enumerate() {
            for (j, age) in panel.grid().points().iter().enumerate() {
                writeln!(
                    f,
                    "{year},{age},{},{}",
                    panel.value(0, i, t, j).exp(),
                    panel.value(1, i, t, j).exp()
                )
                .unwrap();
            }
        }
        files.push(path);
    }
    files
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn decompose_writes_effects_and_factor_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_dataset(&data);
    let config = write_config(tmp.path(), "lambda = 0.5\nmonotone-from = none\n");
    let out = tmp.path().join("run");

    let result = run(&[
        "decompose",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let effects = std::fs::read_to_string(out.join("effects.csv")).unwrap();
    assert!(effects.lines().count() == 7); // header + 6 grid points
    assert!(effects.contains("grand"));
    let factors = std::fs::read_to_string(out.join("factors.csv")).unwrap();
    assert!(factors.contains("loading,F"));
    assert!(factors.contains("eigenvalue,M"));
}

#[test]
fn backtest_then_report_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_dataset(&data);
    let config = write_config(
        tmp.path(),
        "lambda = 0.5\nmonotone-from = none\npi = split-sd\nhorizons = 1,2\nengine = ets\n",
    );
    let out = tmp.path().join("run");

    let result = run(&[
        "backtest",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in ["forecasts.csv", "intervals.csv", "report.csv", "report.txt"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let report_before = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report_before.contains("RMSFE"));
    assert!(report_before.contains("split-sd"));

    // recomputing the report from the saved run reproduces it
    let result = run(&[
        "report",
        "--run",
        out.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let report_after = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report_before, report_after);
}

#[test]
fn intervals_defaults_to_split_sd() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_dataset(&data);
    let config = write_config(
        tmp.path(),
        "lambda = 0.5\nmonotone-from = none\nhorizons = 1\n",
    );
    let out = tmp.path().join("run");
    let result = run(&[
        "intervals",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let intervals = std::fs::read_to_string(out.join("intervals.csv")).unwrap();
    assert!(intervals.contains("split-sd"));
}

#[test]
fn reproduce_emits_tables_and_assertions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_dataset(&data);
    let config = write_config(tmp.path(), "lambda = 0.5\nmonotone-from = none\n");
    let out = tmp.path().join("run");
    let result = run(&[
        "reproduce",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let tables = std::fs::read_to_string(out.join("tables.txt")).unwrap();
    for needle in ["RMSFE", "MAFE", "Mean", "Median", "TWA+OWA+FFM", "TWA+FFM"] {
        assert!(tables.contains(needle), "tables missing {needle}");
    }
    let assertions = std::fs::read_to_string(out.join("assertions.txt")).unwrap();
    assert!(assertions.lines().all(|l| l.starts_with("PASS") || l.starts_with("WARN")));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("qualitative orderings"));
}

#[test]
fn missing_data_directory_fails_cleanly() {
    let result = run(&["backtest", "--data", "/nonexistent", "--out", "/tmp/x"]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("/nonexistent"));
}
