// How close are the propagated output distributions to the truth? Trains a
// few Iris classifiers and scores every method by the probability mass it
// shares with a Monte-Carlo oracle (`1 − TV` on a binned grid).
//
// Run with `cargo run --release --example tv_accuracy`.

use sdprop::experiments::{run_tv_experiment, TvConfig};

pub fn run_example() -> sdprop::Result<()> {
    let mut cfg = TvConfig {
        n_inputs: 3,
        sigmas: vec![0.1, 1.0, 10.0],
        oracle_samples: 20_000,
        ..TvConfig::default()
    };
    cfg.nets.n_nets = 2;
    cfg.nets.training.optimizer.epochs = 100;
    run(&cfg)
}

pub fn run(cfg: &TvConfig) -> sdprop::Result<()> {
    let report = run_tv_experiment(cfg)?;
    println!("{:>8} {:<24} {:>8} {:>8}", "sigma", "method", "1-TV", "std");
    for row in &report.table("summary")?.rows {
        println!(
            "{:>8} {:<24} {:>8.4} {:>8.4}",
            row[0].as_f64().unwrap_or(f64::NAN),
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
