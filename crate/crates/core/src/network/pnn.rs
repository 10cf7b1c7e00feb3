use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::network::{init_params, Activation, MlpSpec, Network};
use crate::numerics::SeededRng;

/// Log-variance outputs are clamped to this range before exponentiation, so
/// predicted variances stay strictly positive and finite.
pub const LOG_VARIANCE_RANGE: (f64, f64) = (-700.0, 50.0);

/// Probabilistic network: a shared trunk feeding a mean head and a
/// log-variance head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnnNetwork {
    pub trunk: Network,
    pub mean_head: Network,
    pub log_var_head: Network,
}

impl PnnNetwork {
    pub fn new(trunk: Network, mean_head: Network, log_var_head: Network) -> Result<Self> {
        check_dim(trunk.output_dim(), mean_head.input_dim())?;
        check_dim(trunk.output_dim(), log_var_head.input_dim())?;
        check_dim(mean_head.output_dim(), log_var_head.output_dim())?;
        Ok(PnnNetwork {
            trunk,
            mean_head,
            log_var_head,
        })
    }

    /// `widths = [input, hidden..., output]`; the heads are single dense layers
    /// on top of the last hidden layer.
    pub fn init(widths: &[usize], activation: Activation, rng: &mut SeededRng) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::InvalidParameter(
                "a PNN needs at least one hidden layer".into(),
            ));
        }
        let hidden = widths[widths.len() - 2];
        let out = widths[widths.len() - 1];
        let trunk_net = init_params(&MlpSpec::new(&widths[..widths.len() - 1], activation), rng)?;
        // The trunk ends in an activation, like any hidden layer.
        let mut layers = trunk_net.layers().to_vec();
        layers.push(crate::network::Layer::Activation(activation));
        let trunk = Network::new(widths[0], layers)?;
        let mean_head = init_params(&MlpSpec::new(&[hidden, out], activation), rng)?;
        let log_var_head = init_params(&MlpSpec::new(&[hidden, out], activation), rng)?;
        PnnNetwork::new(trunk, mean_head, log_var_head)
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.mean_head.output_dim()
    }

    /// `f_μ`: trunk followed by the mean head.
    pub fn mean_network(&self) -> Network {
        self.trunk
            .then(&self.mean_head)
            .expect("dimensions validated at construction")
    }

    /// `(f_μ(x), f_Σ(x))` with `f_Σ` the diagonal of predicted variances.
    pub fn predict(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.trunk.forward(x)?;
        let mean = self.mean_head.forward(&h)?;
        let var = self
            .log_var_head
            .forward(&h)?
            .into_iter()
            .map(|lv| lv.clamp(LOG_VARIANCE_RANGE.0, LOG_VARIANCE_RANGE.1).exp())
            .collect();
        Ok((mean, var))
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.mean_head.param_count() + self.log_var_head.param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variances_are_positive_even_when_clamped() {
        let mut rng = SeededRng::new(0);
        let mut pnn = PnnNetwork::init(&[2, 8, 1], Activation::Relu, &mut rng).unwrap();
        for d in pnn.log_var_head.dense_layers_mut() {
            d.bias[0] = -1e6;
        }
        let (_, var) = pnn.predict(&[0.3, 0.1]).unwrap();
        assert!(var[0] > 0.0);
        assert!(var[0] < 1e-300);
    }

    #[test]
    fn mean_network_matches_predict() {
        let mut rng = SeededRng::new(1);
        let pnn = PnnNetwork::init(&[3, 6, 2], Activation::Relu, &mut rng).unwrap();
        let x = [0.5, -0.2, 0.9];
        let (mean, _) = pnn.predict(&x).unwrap();
        assert_eq!(pnn.mean_network().forward(&x).unwrap(), mean);
    }
}
