// Selective prediction on digits mixed half and half with letters the
// classifier has never seen. Certainty scores from softmax entropy are
// compared with scores from propagated Gaussian and Cauchy input noise.
//
// Run with `cargo run --release --example selective_prediction`.

use sdprop::experiments::{run_selective_prediction, DataSource, SelectiveConfig};

pub fn run_example() -> sdprop::Result<()> {
    let mut cfg = SelectiveConfig {
        in_dist: DataSource::Mnist { limit: Some(1500) },
        ood: DataSource::Letters { limit: Some(600) },
        n_seeds: 1,
        ..SelectiveConfig::default()
    };
    cfg.training.hidden = vec![64];
    cfg.training.optimizer.epochs = 5;
    run(&cfg)
}

pub fn run(cfg: &SelectiveConfig) -> sdprop::Result<()> {
    let report = run_selective_prediction(cfg)?;
    println!("{:<20} {:<26} {:>8} {:>8}", "model", "score", "RCAUC", "std");
    for row in &report.table("summary")?.rows {
        println!(
            "{:<20} {:<26} {:>8.4} {:>8.4}",
            row[0].as_str().unwrap_or(""),
            row[1].as_str().unwrap_or(""),
            row[2].as_f64().unwrap_or(f64::NAN),
            row[3].as_f64().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn main() -> sdprop::Result<()> {
    run_example()
}
