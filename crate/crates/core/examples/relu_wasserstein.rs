// A single ReLU applied to `N(μ, 0.1²)`: Wasserstein-1 distance of the
// linearized and the moment-matched Gaussian to the true output law, as a
// function of μ.
//
// Run with `cargo run --example relu_wasserstein`.

use sdprop::experiments::ReluGridConfig;

pub fn run_example() -> sdprop::Result<()> {
    let cfg = ReluGridConfig {
        points: 21,
        samples: 50_000,
        ..ReluGridConfig::default()
    };
    println!("{:>7} {:>12} {:>12}", "mu", "W1 sdp", "W1 mm");
    for p in sdprop::experiments::relu_grid(&cfg, 1)? {
        println!("{:>7.3} {:>12.3e} {:>12.3e}", p.mu, p.w1_sdp, p.w1_moment_match);
    }
    Ok(())
}

fn main() -> sdprop::Result<()> {
    run_example()
}
