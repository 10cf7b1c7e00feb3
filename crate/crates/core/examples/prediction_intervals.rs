// Prediction intervals on a heteroscedastic regression task. A probabilistic
// network predicts a mean and a variance; propagating input noise through
// its mean path adds a second variance term. Models are selected by
// validation coverage.
//
// Run with `cargo run --release --example prediction_intervals`.

use sdprop::experiments::{run_interval_experiment, Cell, IntervalConfig};

pub fn run_example() -> sdprop::Result<()> {
    let cfg = IntervalConfig {
        epochs: 150,
        learning_rates: vec![1e-2],
        weight_decays: vec![0.0],
        input_variances: vec![1e-4, 1e-3, 1e-2],
        n_seeds: 1,
        ..IntervalConfig::default()
    };
    run(&cfg)
}

pub fn run(cfg: &IntervalConfig) -> sdprop::Result<()> {
    let report = run_interval_experiment(cfg)?;
    let t = report.table("selected")?;
    println!("{}", t.columns.join("  "));
    for row in &t.rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => format!("{v:.4}"),
                Cell::Int(i) => i.to_string(),
                Cell::Text(t) => t.clone(),
            })
            .collect();
        println!("{}", cells.join("  "));
    }
    Ok(())
}

fn main() -> sdprop::Result<()> {
    run_example()
}
