// Uncertainty map of a two-moons classifier trained with the pairwise
// Gaussian loss, written as CSV for plotting.
//
// Run with `cargo run --release --example two_moons_uncertainty -- <out-dir>`.

use std::path::PathBuf;

use sdprop::experiments::{run_twomoons_map, TwoMoonsConfig};

pub fn run_example() -> sdprop::Result<(f64, f64)> {
    run(None)
}

pub fn run(out_dir: Option<PathBuf>) -> sdprop::Result<(f64, f64)> {
    let cfg = TwoMoonsConfig {
        resolution: 25,
        ..TwoMoonsConfig::default()
    };
    let report = run_twomoons_map(&cfg)?;
    let summary = report.table("summary")?;
    let on_data = summary.numbers("data_uncertainty")?[0];
    let centroid = summary.numbers("centroid_uncertainty")?[0];
    let corner = summary.numbers("corner_uncertainty")?[0];
    println!("score-difference std on training points {on_data:.4}, at class centroids {centroid:.4}, at box corners {corner:.4}");
    if let Some(dir) = out_dir {
        for p in report.write(&dir)? {
            println!("wrote {}", p.display());
        }
    }
    Ok((on_data, corner))
}

fn main() -> sdprop::Result<()> {
    run(std::env::args().nth(1).map(PathBuf::from)).map(|_| ())
}
