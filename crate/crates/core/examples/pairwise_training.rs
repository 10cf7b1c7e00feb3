// Train an Iris classifier with the pairwise Gaussian loss, where each
// training input is treated as `N(x, σ²I)` and propagated layer by layer.
// The trained network is then queried for class probabilities and a
// certainty score.
//
// Run with `cargo run --example pairwise_training`.

use sdprop::data::iris;
use sdprop::distprop::{propagate, MarginalGaussian, PropagationMethod};
use sdprop::losses::{pairwise_win_probs, ClassTarget};
use sdprop::metrics::{uncertainty_scores, UncertaintyKind};
use sdprop::network::{init_params, Activation, MlpSpec, Network};
use sdprop::numerics::SeededRng;
use sdprop::train::{train, LossSpec, Model, OptimizerConfig};

pub fn run_example() -> sdprop::Result<f64> {
    run(150)
}

pub fn run(epochs: usize) -> sdprop::Result<f64> {
    let splits = iris()?.split_normalized([0.7, 0.0, 0.3], 11)?;
    let mut rng = SeededRng::new(5);
    let mut model = Model::Net(init_params(&MlpSpec::new(&[4, 32, 32, 3], Activation::Relu), &mut rng)?);
    let loss = LossSpec::PairwiseGaussian { input_std: 0.1 };
    let hist = train(&mut model, &splits.train, Some(&splits.test), &loss, &OptimizerConfig::new(1e-2, epochs, 16), &mut rng)?;
    let Model::Net(net) = model else { unreachable!() };
    println!("loss: first epoch {:.4}, last epoch {:.4}", hist.train_loss[0], hist.train_loss[epochs - 1]);

    let acc = accuracy(&net, &splits.test.x, splits.test.labels().unwrap())?;
    println!("test accuracy {acc:.3}");

    let x = splits.test.x.row(0).to_vec();
    let label = splits.test.labels().unwrap()[0];
    let out = propagate(&net, &MarginalGaussian::isotropic(x, 0.1)?.into(), PropagationMethod::SdpFull, &mut rng)?;
    let win = pairwise_win_probs(&out, ClassTarget::new(label, 3)?)?;
    println!("first test point: label {label}, P(label beats each class) {win:?}");
    println!("certainty {:.4}", uncertainty_scores(&out, UncertaintyKind::PairwiseGaussEntropy)?);
    Ok(acc)
}

fn accuracy(net: &Network, x: &sdprop::numerics::Matrix, labels: &[usize]) -> sdprop::Result<f64> {
    let out = net.forward_batch(x)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(r, &l)| {
            let row = out.row(*r);
            (0..row.len()).all(|j| row[j] <= row[l])
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn main() -> sdprop::Result<()> {
    run_example().map(|_| ())
}
