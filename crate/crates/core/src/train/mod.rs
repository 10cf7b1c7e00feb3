//! Mini-batch Adam training of plain and probabilistic networks.

mod graph;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::tape::{
    cauchy_nll_loss, gaussian_nll_loss, pairwise_cauchy_loss, pairwise_gaussian_loss, softmax_ce_loss,
};
use crate::network::{Dense, GradTape, Network, PnnNetwork, Var, LOG_VARIANCE_RANGE};
use crate::numerics::{Matrix, SeededRng};

use graph::{forward_marginal, forward_point, register, ParamVars, Spread};

/// A trainable model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Net(Network),
    Pnn(PnnNetwork),
}

impl Model {
    /// Dense layers in parameter order: trunk, mean head, then log-variance
    /// head for a PNN.
    pub fn dense_layers_mut(&mut self) -> Vec<&mut Dense> {
        match self {
            Model::Net(n) => n.dense_layers_mut().collect(),
            Model::Pnn(p) => p
                .trunk
                .dense_layers_mut()
                .chain(p.mean_head.dense_layers_mut())
                .chain(p.log_var_head.dense_layers_mut())
                .collect(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Model::Net(_) => "network",
            Model::Pnn(_) => "pnn",
        }
    }
}

/// Training objective, including the input noise that is propagated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum LossSpec {
    /// Softmax cross-entropy on point predictions.
    SoftmaxCe,
    /// Pairwise loss on marginal-SDP Gaussian outputs for inputs `N(x, input_std²)`.
    PairwiseGaussian { input_std: f64 },
    /// Pairwise loss on marginal-SDP Cauchy outputs for inputs `C(x, input_scale)`.
    PairwiseCauchy { input_scale: f64 },
    /// Gaussian NLL of a network whose output variance comes only from
    /// propagating `N(x, input_std²)`.
    SdpGaussianNll { input_std: f64 },
    /// Cauchy NLL with the scale from propagating `C(x, input_scale)`.
    SdpCauchyNll { input_scale: f64 },
    /// Gaussian NLL of a probabilistic network; a positive `input_std` adds
    /// the propagated variance of the mean path.
    PnnGaussianNll { input_std: f64 },
}

impl LossSpec {
    fn needs_pnn(&self) -> bool {
        matches!(self, LossSpec::PnnGaussianNll { .. })
    }

    fn is_classification(&self) -> bool {
        matches!(
            self,
            LossSpec::SoftmaxCe | LossSpec::PairwiseGaussian { .. } | LossSpec::PairwiseCauchy { .. }
        )
    }

    fn noise(&self) -> f64 {
        match *self {
            LossSpec::SoftmaxCe => 0.0,
            LossSpec::PairwiseGaussian { input_std }
            | LossSpec::SdpGaussianNll { input_std }
            | LossSpec::PnnGaussianNll { input_std } => input_std,
            LossSpec::PairwiseCauchy { input_scale } | LossSpec::SdpCauchyNll { input_scale } => input_scale,
        }
    }
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

/// Adam hyperparameters and the epoch/batch schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 penalty added to every parameter gradient.
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn new(lr: f64, epochs: usize, batch_size: usize) -> Self {
        OptimizerConfig {
            lr,
            epochs,
            batch_size,
            weight_decay: 0.0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }
}

/// Per-epoch mean losses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

struct Recorded {
    loss: Var,
    params: Vec<ParamVars>,
}

fn record(tape: &mut GradTape, model: &Model, data: &Dataset, loss: &LossSpec) -> Result<Recorded> {
    let x = tape.leaf(data.x.clone());
    let rows = data.len();
    let noise = loss.noise();
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("input noise {noise} must be finite and ≥ 0")));
    }
    let wrong = |method: &'static str| Error::IncompatibleMethod {
        method,
        family: model.kind(),
    };
    let labels = || data.labels().ok_or(Error::InvalidParameter("classification loss needs class labels".into()));
    let targets = || {
        data.real_targets()
            .map(|v| Matrix::column_vector(v))
            .ok_or(Error::InvalidParameter("regression loss needs real targets".into()))
    };
    match (model, loss) {
        (Model::Net(net), _) if loss.needs_pnn() => {
            let _ = net;
            Err(wrong("pnn_gaussian_nll"))
        }
        (Model::Pnn(_), _) if !loss.needs_pnn() => Err(wrong("network loss")),
        (Model::Net(net), _) => {
            let p = register(tape, net);
            let cols = net.input_dim();
            let loss_var = match *loss {
                LossSpec::SoftmaxCe => {
                    let logits = forward_point(tape, net, &p, x);
                    softmax_ce_loss(tape, logits, labels()?)
                }
                LossSpec::PairwiseGaussian { input_std } => {
                    let v = tape.leaf(Matrix::filled(rows, cols, input_std * input_std));
                    let (m, var) = forward_marginal(tape, net, &p, x, v, Spread::Variance);
                    pairwise_gaussian_loss(tape, m, var, labels()?)
                }
                LossSpec::PairwiseCauchy { input_scale } => {
                    let g = tape.leaf(Matrix::filled(rows, cols, input_scale));
                    let (m, s) = forward_marginal(tape, net, &p, x, g, Spread::Scale);
                    pairwise_cauchy_loss(tape, m, s, labels()?)
                }
                LossSpec::SdpGaussianNll { input_std } => {
                    let v = tape.leaf(Matrix::filled(rows, cols, input_std * input_std));
                    let (m, var) = forward_marginal(tape, net, &p, x, v, Spread::Variance);
                    gaussian_nll_loss(tape, m, var, &targets()?)
                }
                LossSpec::SdpCauchyNll { input_scale } => {
                    let g = tape.leaf(Matrix::filled(rows, cols, input_scale));
                    let (m, s) = forward_marginal(tape, net, &p, x, g, Spread::Scale);
                    cauchy_nll_loss(tape, m, s, &targets()?)
                }
                LossSpec::PnnGaussianNll { .. } => unreachable!("handled above"),
            };
            Ok(Recorded {
                loss: loss_var,
                params: vec![p],
            })
        }
        (Model::Pnn(pnn), LossSpec::PnnGaussianNll { input_std }) => {
            let pt = register(tape, &pnn.trunk);
            let pm = register(tape, &pnn.mean_head);
            let pv = register(tape, &pnn.log_var_head);
            let cols = pnn.input_dim();
            let v0 = tape.leaf(Matrix::filled(rows, cols, input_std * input_std));
            // The trunk location equals the point forward pass, so the
            // log-variance head can share it.
            let (h, hv) = forward_marginal(tape, &pnn.trunk, &pt, x, v0, Spread::Variance);
            let (mean, sdp_var) = forward_marginal(tape, &pnn.mean_head, &pm, h, hv, Spread::Variance);
            let log_var = forward_point(tape, &pnn.log_var_head, &pv, h);
            let clamped = tape.clamp(log_var, LOG_VARIANCE_RANGE.0, LOG_VARIANCE_RANGE.1);
            let aleatoric = tape.exp(clamped);
            let var = tape.add(aleatoric, sdp_var);
            let l = gaussian_nll_loss(tape, mean, var, &targets()?);
            Ok(Recorded {
                loss: l,
                params: vec![pt, pm, pv],
            })
        }
        (Model::Pnn(_), _) => unreachable!("guarded above"),
    }
}

/// Mean loss of `model` on `data`.
pub fn evaluate_loss(model: &Model, data: &Dataset, loss: &LossSpec) -> Result<f64> {
    check_task(data, loss)?;
    let mut tape = GradTape::new();
    let r = record(&mut tape, model, data, loss)?;
    Ok(tape.scalar_value(r.loss))
}

/// Mean loss of `model` on `data` and its gradient. The gradient holds one
/// matrix per weight matrix and bias (as a `1 × n` row), in the order of
/// [`Model::dense_layers_mut`].
pub fn loss_gradient(model: &Model, data: &Dataset, loss: &LossSpec) -> Result<(f64, Vec<Matrix>)> {
    check_task(data, loss)?;
    let mut tape = GradTape::new();
    let rec = record(&mut tape, model, data, loss)?;
    let value = tape.scalar_value(rec.loss);
    let grads = tape.grad(rec.loss)?;
    let mut out = Vec::new();
    for p in &rec.params {
        for (&w, &b) in p.weights.iter().zip(&p.biases) {
            out.push(grads.wrt(w, tape.value(w).shape())?);
            out.push(grads.wrt(b, tape.value(b).shape())?);
        }
    }
    Ok((value, out))
}

fn check_task(data: &Dataset, loss: &LossSpec) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    if loss.is_classification() != data.labels().is_some() {
        return Err(Error::InvalidParameter(
            "loss and dataset disagree on classification vs regression".into(),
        ));
    }
    Ok(())
}

struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

/// Trains `model` in place. Each epoch visits a fresh permutation of `train`
/// drawn from `rng`; the last batch may be short.
pub fn train(
    model: &mut Model,
    train: &Dataset,
    val: Option<&Dataset>,
    loss: &LossSpec,
    opt: &OptimizerConfig,
    rng: &mut SeededRng,
) -> Result<History> {
    check_task(train, loss)?;
    if let Some(v) = val {
        check_task(v, loss)?;
    }
    if opt.batch_size == 0 || !(opt.lr > 0.0) {
        return Err(Error::InvalidParameter("batch_size and lr must be positive".into()));
    }
    let shapes: Vec<(usize, usize)> = model
        .dense_layers_mut()
        .iter()
        .flat_map(|d| [d.weights.shape(), (1, d.bias.len())])
        .collect();
    let mut state = AdamState {
        m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        t: 0,
    };
    let mut history = History::default();
    for epoch in 0..opt.epochs {
        let order = rng.permutation(train.len());
        let mut total = 0.0;
        for (batch, idx) in order.chunks(opt.batch_size).enumerate() {
            let data = train.subset(idx);
            let (value, g) = loss_gradient(model, &data, loss)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch, value });
            }
            total += value * idx.len() as f64;
            adam_step(model, &mut state, g, opt);
        }
        history.train_loss.push(total / train.len() as f64);
        if let Some(v) = val {
            history.val_loss.push(evaluate_loss(model, v, loss)?);
        }
    }
    Ok(history)
}

fn adam_step(model: &mut Model, s: &mut AdamState, grads: Vec<Matrix>, opt: &OptimizerConfig) {
    s.t += 1;
    let c1 = 1.0 - opt.beta1.powi(s.t);
    let c2 = 1.0 - opt.beta2.powi(s.t);
    let mut k = 0;
    for d in model.dense_layers_mut() {
        for params in [d.weights.as_mut_slice(), d.bias.as_mut_slice()] {
            let (m, v, g) = (s.m[k].as_mut_slice(), s.v[k].as_mut_slice(), grads[k].as_slice());
            for i in 0..params.len() {
                let gi = g[i] + opt.weight_decay * params[i];
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
                params[i] -= opt.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + opt.eps);
            }
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{heteroscedastic_sine, Targets};
    use crate::network::{init_params, Activation, MlpSpec};

    fn separable(n: usize, rng: &mut SeededRng) -> Dataset {
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let sign = if c == 0 { -1.0 } else { 1.0 };
            x.extend([sign * (1.0 + rng.uniform()), rng.normal(0.0, 1.0)]);
            labels.push(c);
        }
        Dataset::new(Matrix::new(n, 2, x).unwrap(), Targets::Class { labels, n_classes: 2 }).unwrap()
    }

    fn accuracy(net: &Network, d: &Dataset) -> f64 {
        let out = net.forward_batch(&d.x).unwrap();
        let hits = d
            .labels()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(r, &l)| crate::network::argmax(out.row(*r)) == l)
            .count();
        hits as f64 / d.len() as f64
    }

    #[test]
    fn pairwise_gaussian_separates_toy_data() {
        let mut rng = SeededRng::new(4);
        let data = separable(200, &mut rng);
        let mut model = Model::Net(init_params(&MlpSpec::new(&[2, 16, 2], Activation::Relu), &mut rng).unwrap());
        let loss = LossSpec::PairwiseGaussian { input_std: 0.1 };
        let hist = train(&mut model, &data, None, &loss, &OptimizerConfig::new(1e-2, 200, 32), &mut rng).unwrap();
        assert!(hist.train_loss.last().unwrap() < &hist.train_loss[0]);
        let Model::Net(net) = &model else { unreachable!() };
        assert_eq!(accuracy(net, &data), 1.0);
    }

    #[test]
    fn zero_epochs_is_noop_and_runs_are_reproducible() {
        let mut rng = SeededRng::new(5);
        let data = separable(40, &mut rng);
        let net = init_params(&MlpSpec::new(&[2, 8, 2], Activation::Relu), &mut rng).unwrap();
        let mut model = Model::Net(net.clone());
        let h = train(&mut model, &data, None, &LossSpec::SoftmaxCe, &OptimizerConfig::new(1e-2, 0, 8), &mut rng).unwrap();
        assert_eq!(model, Model::Net(net.clone()));
        assert!(h.train_loss.is_empty());

        let run = || {
            let mut m = Model::Net(net.clone());
            let loss = LossSpec::PairwiseCauchy { input_scale: 0.05 };
            let opt = OptimizerConfig::new(1e-2, 5, 8).with_weight_decay(1e-4);
            let h = train(&mut m, &data, Some(&data), &loss, &opt, &mut SeededRng::new(77)).unwrap();
            (m, h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pnn_regression_reduces_nll() {
        let mut rng = SeededRng::new(6);
        let data = heteroscedastic_sine(300, &mut rng).unwrap();
        let pnn = PnnNetwork::init(&[1, 32, 1], Activation::Relu, &mut rng).unwrap();
        let mut model = Model::Pnn(pnn);
        let loss = LossSpec::PnnGaussianNll { input_std: 0.05 };
        let before = evaluate_loss(&model, &data, &loss).unwrap();
        let hist = train(&mut model, &data, Some(&data), &loss, &OptimizerConfig::new(5e-3, 60, 32), &mut rng).unwrap();
        assert!(hist.val_loss.last().unwrap() < &(before - 0.3), "{before} -> {:?}", hist.val_loss.last());
    }

    #[test]
    fn mismatched_setups_rejected() {
        let mut rng = SeededRng::new(7);
        let cls = separable(10, &mut rng);
        let net = init_params(&MlpSpec::new(&[2, 4, 2], Activation::Relu), &mut rng).unwrap();
        let mut model = Model::Net(net);
        let opt = OptimizerConfig::new(1e-2, 1, 4);
        assert!(train(&mut model, &cls, None, &LossSpec::SdpGaussianNll { input_std: 0.1 }, &opt, &mut rng).is_err());
        assert!(train(&mut model, &cls, None, &LossSpec::PnnGaussianNll { input_std: 0.0 }, &opt, &mut rng).is_err());
        assert!(train(&mut model, &cls, None, &LossSpec::PairwiseGaussian { input_std: -1.0 }, &opt, &mut rng).is_err());
    }

    #[test]
    fn exploding_loss_is_reported() {
        let mut rng = SeededRng::new(8);
        let mut data = separable(16, &mut rng);
        data.x = data.x.map(|v| v * 1e300);
        let net = init_params(&MlpSpec::new(&[2, 4, 2], Activation::Relu), &mut rng).unwrap();
        let err = train(
            &mut Model::Net(net),
            &data,
            None,
            &LossSpec::PairwiseGaussian { input_std: 1e200 },
            &OptimizerConfig::new(1e-2, 1, 16),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, batch: 0, .. }), "{err}");
    }
}
