//! Network evaluation recorded on a [`GradTape`].

use crate::network::{Activation, GradTape, Layer, Network, Var};
use crate::numerics::Matrix;

/// Tape leaves for the weights and biases of each dense layer, in layer order.
pub(crate) struct ParamVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

pub(crate) fn register(tape: &mut GradTape, net: &Network) -> ParamVars {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for d in net.dense_layers() {
        weights.push(tape.leaf(d.weights.clone()));
        biases.push(tape.leaf(Matrix::row_vector(&d.bias)));
    }
    ParamVars { weights, biases }
}

/// Batched point evaluation; `x` is `batch × input_dim`.
pub(crate) fn forward_point(tape: &mut GradTape, net: &Network, p: &ParamVars, x: Var) -> Var {
    let mut h = x;
    let mut k = 0;
    for layer in net.layers() {
        h = match layer {
            Layer::Dense(_) => {
                let z = tape.matmul_t(h, p.weights[k]);
                let out = tape.add(z, p.biases[k]);
                k += 1;
                out
            }
            Layer::Activation(a) => tape.activation(h, *a),
            Layer::MaxPool { group_size } => tape.maxpool(h, *group_size),
        };
    }
    h
}

/// What the second channel of a marginal pass carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Spread {
    /// Gaussian variance `σ²`.
    Variance,
    /// Cauchy scale `γ`.
    Scale,
}

/// Batched layer-by-layer marginal propagation. Returns the output location
/// and spread (variance or scale, matching `spread`).
pub(crate) fn forward_marginal(
    tape: &mut GradTape,
    net: &Network,
    p: &ParamVars,
    loc: Var,
    spread_in: Var,
    spread: Spread,
) -> (Var, Var) {
    let (mut m, mut s) = (loc, spread_in);
    let mut k = 0;
    for layer in net.layers() {
        match layer {
            Layer::Dense(_) => {
                let w = p.weights[k];
                let z = tape.matmul_t(m, w);
                m = tape.add(z, p.biases[k]);
                let w_spread = match spread {
                    Spread::Variance => tape.square(w),
                    Spread::Scale => tape.abs(w),
                };
                s = tape.matmul_t(s, w_spread);
                k += 1;
            }
            Layer::Activation(a) => {
                s = slope(tape, s, m, *a, spread);
                m = tape.activation(m, *a);
            }
            Layer::MaxPool { group_size } => {
                s = tape.select_by(s, m, *group_size);
                m = tape.maxpool(m, *group_size);
            }
        }
    }
    (m, s)
}

fn slope(tape: &mut GradTape, s: Var, at: Var, a: Activation, spread: Spread) -> Var {
    let once = tape.activation_slope(s, at, a);
    match spread {
        Spread::Variance => tape.activation_slope(once, at, a),
        Spread::Scale => once,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distprop::{MarginalCauchy, MarginalGaussian, Propagate};
    use crate::network::{init_params, MlpSpec};
    use crate::numerics::SeededRng;

    #[test]
    fn tape_passes_match_library_propagation() {
        let mut rng = SeededRng::new(21);
        let mut layers = init_params(&MlpSpec::new(&[3, 8, 6], Activation::Relu), &mut rng)
            .unwrap()
            .layers()
            .to_vec();
        layers.push(Layer::Activation(Activation::LeakyRelu { slope: 0.1 }));
        layers.push(Layer::MaxPool { group_size: 2 });
        let net = Network::new(3, layers).unwrap();
        let x = Matrix::from_rows(&[[0.3, -0.2, 0.8], [-1.0, 0.5, 0.1]]).unwrap();

        let mut tape = GradTape::new();
        let p = register(&mut tape, &net);
        let xv = tape.leaf(x.clone());
        let y = forward_point(&mut tape, &net, &p, xv);
        assert!(tape.value(y).max_abs_diff(&net.forward_batch(&x).unwrap()) < 1e-14);

        let sv = tape.leaf(Matrix::filled(2, 3, 0.09));
        let (m, v) = forward_marginal(&mut tape, &net, &p, xv, sv, Spread::Variance);
        let gv = tape.leaf(Matrix::filled(2, 3, 0.2));
        let (cm, cs) = forward_marginal(&mut tape, &net, &p, xv, gv, Spread::Scale);
        for r in 0..2 {
            let g = MarginalGaussian::isotropic(x.row(r).to_vec(), 0.3).unwrap().push_network(&net).unwrap();
            let c = MarginalCauchy::isotropic(x.row(r).to_vec(), 0.2).unwrap().push_network(&net).unwrap();
            for j in 0..3 {
                assert!((tape.value(m)[(r, j)] - g.loc()[j]).abs() < 1e-14);
                assert!((tape.value(v)[(r, j)].sqrt() - g.scale()[j]).abs() < 1e-14);
                assert!((tape.value(cm)[(r, j)] - c.loc()[j]).abs() < 1e-14);
                assert!((tape.value(cs)[(r, j)] - c.scale()[j]).abs() < 1e-14);
            }
        }
    }
}
