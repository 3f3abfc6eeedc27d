//! Writes a synthetic demo dataset as per-unit CSV files, so the CLI can
//! be exercised without licensed mortality data.
//!
//! Usage: synthetic_dataset <out_dir> [units] [years] [ages]

use std::io::Write;

use hdfts::sim::{generate_panel, SimConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let out_dir = args.next().unwrap_or_else(|| "demo-data".into());
    let n_units: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);
    let n_years: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(30);
    let grid_points: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(21);

    let panel = generate_panel(&SimConfig {
        n_units,
        n_years,
        grid_points,
        noise_sd: 0.05,
        seed: 7,
        ..Default::default()
    });

    std::fs::create_dir_all(&out_dir).expect("create output directory");
    for (i, unit) in panel.index().units().iter().enumerate() {
        let path = std::path::Path::new(&out_dir).join(format!("{unit}.csv"));
        let mut f = std::fs::File::create(&path).expect("create unit file");
        writeln!(f, "Year,Age,F,M").unwrap();
        for (t, year) in panel.index().years().iter().enumerate() {
            for (j, age) in panel.grid().points().iter().enumerate() {
                writeln!(
                    f,
                    "{year},{age},{:.8},{:.8}",
                    panel.value(0, i, t, j).exp(),
                    panel.value(1, i, t, j).exp()
                )
                .unwrap();
            }
        }
    }
    println!(
        "wrote {n_units} unit files ({n_years} years x {grid_points} ages) under {out_dir}"
    );
}
