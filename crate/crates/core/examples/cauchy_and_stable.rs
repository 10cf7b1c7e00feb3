// Cauchy inputs through a network, and α-stable scales through one affine
// layer. At α = 2 and α = 1 the stable rule reproduces the Gaussian and
// Cauchy rules.
//
// Run with `cargo run --example cauchy_and_stable`.

use sdprop::distprop::{
    propagate, MarginalCauchy, MarginalGaussian, MarginalStable, Propagate, PropagationMethod, StableMode,
};
use sdprop::network::{init_params, Activation, MlpSpec};
use sdprop::numerics::{Matrix, SeededRng};

pub fn run_example() -> sdprop::Result<()> {
    let mut rng = SeededRng::new(3);
    let net = init_params(&MlpSpec::new(&[3, 16, 2], Activation::LeakyRelu { slope: 0.1 }), &mut rng)?;
    let input = MarginalCauchy::isotropic(vec![0.2, -0.5, 1.0], 0.05)?;
    let layerwise = propagate(&net, &input.clone().into(), PropagationMethod::SdpMarginalCauchy, &mut rng)?;
    let linearized = propagate(&net, &input.into(), PropagationMethod::SdpFull, &mut rng)?;
    println!("layer-by-layer Cauchy: loc {:?} scale {:?}", layerwise.location(), layerwise.marginal_scale());
    println!("linearized Cauchy:     loc {:?} scale {:?}", linearized.location(), linearized.marginal_scale());

    let w = Matrix::from_rows(&[[0.5, -1.5, 2.0], [1.0, 0.25, -0.75]])?;
    let b = [0.1, -0.2];
    let loc = vec![0.3, 0.0, -0.4];
    let scale = vec![0.2, 0.1, 0.3];
    for alpha in [0.5, 1.0, 1.5, 2.0] {
        let s = MarginalStable::new(loc.clone(), scale.clone(), alpha, 0.0)?;
        let out = s.push_affine_stable(&w, &b, StableMode::Exact)?;
        println!("alpha {alpha:.1}: output scale {:?}", out.scale());
    }
    let g = MarginalGaussian::new(loc.clone(), scale.clone())?.push_affine(&w, &b)?;
    let c = MarginalCauchy::new(loc, scale)?.push_affine(&w, &b)?;
    println!("Gaussian rule: {:?}", g.scale());
    println!("Cauchy rule:   {:?}", c.scale());
    Ok(())
}

fn main() -> sdprop::Result<()> {
    run_example()
}
