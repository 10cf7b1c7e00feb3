// Push a Gaussian input through a small ReLU network with every method and
// compare the output moments against a large Monte-Carlo sample.
//
// Run with `cargo run --example propagate_gaussian`.

use sdprop::distprop::{mean_and_cov, propagate, Distribution, MarginalGaussian, PropagationMethod};
use sdprop::network::{init_params, Activation, MlpSpec};
use sdprop::numerics::{sample, SeededRng};

pub fn run_example() -> sdprop::Result<Vec<(String, Vec<f64>, Vec<f64>)>> {
    let mut rng = SeededRng::new(7);
    let net = init_params(&MlpSpec::new(&[4, 32, 32, 3], Activation::Relu), &mut rng)?;
    let input: Distribution = MarginalGaussian::isotropic(vec![0.4, -0.3, 0.8, 0.1], 0.2)?.into();

    let mut rows = Vec::new();
    for method in [
        PropagationMethod::SdpFull,
        PropagationMethod::SdpMarginalGaussian,
        PropagationMethod::MarginalMomentMatch,
        PropagationMethod::McEstimate { k: 200_000 },
    ] {
        let out = propagate(&net, &input, method, &mut rng)?;
        rows.push((method.name(), out.location().to_vec(), out.marginal_scale()));
    }

    // Reference moments from raw samples pushed through the network.
    let xs = sample(&input, 200_000, &mut rng)?;
    let (mean, cov) = mean_and_cov(&net.forward_batch(&xs)?);
    let std = (0..cov.rows()).map(|i| cov[(i, i)].sqrt()).collect();
    rows.push(("monte_carlo".into(), mean, std));

    println!("{:<24} {:>30}   {:>30}", "method", "mean", "std");
    for (name, m, s) in &rows {
        println!("{name:<24} {:>30}   {:>30}", fmt(m), fmt(s));
    }
    Ok(rows)
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:9.4}")).collect::<Vec<_>>().join(" ")
}

fn main() -> sdprop::Result<()> {
    run_example().map(|_| ())
}
