use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{cell_seed, DataSource, ExperimentConfig, Report, Table};
use crate::data::Dataset;
use crate::distprop::{propagate, Distribution, MarginalCauchy, MarginalGaussian, PropagationMethod};
use crate::error::{Error, Result};
use crate::network::{argmax, init_params, Activation, MlpSpec, Network, PnnNetwork};
use crate::numerics::SeededRng;
use crate::train::{evaluate_loss, train, LossSpec, Model, OptimizerConfig};

/// Where the network to propagate through comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    /// A network JSON file, as written by `train`.
    File { path: PathBuf },
    /// A freshly initialized MLP.
    Random { widths: Vec<usize>, activation: Activation },
}

/// Input distribution family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFamily {
    Gaussian,
    Cauchy,
}

/// Independent-coordinate input distribution. A single `scale` entry is
/// broadcast to every coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub family: InputFamily,
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputSpec {
    pub fn distribution(&self) -> Result<Distribution> {
        let scale = match self.scale.as_slice() {
            [s] => vec![*s; self.location.len()],
            s => s.to_vec(),
        };
        Ok(match self.family {
            InputFamily::Gaussian => MarginalGaussian::new(self.location.clone(), scale)?.into(),
            InputFamily::Cauchy => MarginalCauchy::new(self.location.clone(), scale)?.into(),
        })
    }
}

/// Propagates one input distribution with several methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagateConfig {
    pub seed: u64,
    pub network: NetworkSource,
    pub input: InputSpec,
    pub methods: Vec<PropagationMethod>,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        PropagateConfig {
            seed: 0,
            network: NetworkSource::Random {
                widths: vec![4, 64, 64, 3],
                activation: Activation::Relu,
            },
            input: InputSpec {
                family: InputFamily::Gaussian,
                location: vec![0.5, -0.2, 0.1, 0.3],
                scale: vec![0.1],
            },
            methods: vec![
                PropagationMethod::SdpFull,
                PropagationMethod::SdpMarginalGaussian,
                PropagationMethod::SdpMarginalCauchy,
                PropagationMethod::MarginalMomentMatch,
                PropagationMethod::McEstimate { k: 100_000 },
            ],
        }
    }
}

impl ExperimentConfig for PropagateConfig {
    const NAME: &'static str = "propagate";

    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn smoke(&mut self) {
        for m in &mut self.methods {
            if let PropagationMethod::McEstimate { k } = m {
                *k = (*k).min(1000);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        self.input.distribution().map(|_| ()).map_err(|e| Error::Config(format!("input: {e}")))
    }
}

const STREAM_INIT: u64 = 60;
const STREAM_METHOD: u64 = 61;

/// Table `outputs` has one row per method and output coordinate; methods
/// that do not accept the input family get a single `skipped` row. The
/// report artifacts hold the network and every output distribution.
pub fn run_propagate(cfg: &PropagateConfig) -> Result<Report> {
    cfg.validate()?;
    let net = match &cfg.network {
        NetworkSource::File { path } => Network::load(path)?,
        NetworkSource::Random { widths, activation } => {
            init_params(&MlpSpec::new(widths, *activation), &mut SeededRng::new(cell_seed(cfg.seed, &[STREAM_INIT])))?
        }
    };
    let input = cfg.input.distribution()?;
    let mut table = Table::new(&["method", "status", "family", "dim", "location", "scale"]);
    let mut outputs = serde_json::Map::new();
    for (m, &method) in cfg.methods.iter().enumerate() {
        let mut rng = SeededRng::new(cell_seed(cfg.seed, &[STREAM_METHOD, m as u64]));
        match propagate(&net, &input, method, &mut rng) {
            Ok(out) => {
                let scale = out.marginal_scale();
                for (k, (&loc, s)) in out.location().iter().zip(scale).enumerate() {
                    table.push(vec![
                        method.name().into(),
                        "ok".into(),
                        out.family().into(),
                        k.into(),
                        loc.into(),
                        s.into(),
                    ]);
                }
                outputs.insert(method.name(), serde_json::to_value(&out)?);
            }
            Err(e @ Error::IncompatibleMethod { .. }) => {
                table.push(vec![
                    method.name().into(),
                    format!("skipped: {e}").into(),
                    "".into(),
                    0usize.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                ]);
            }
            Err(e) => return Err(e),
        }
    }
    let mut report = Report::new(PropagateConfig::NAME, cfg)?;
    report.tables.insert("outputs".into(), table);
    report.artifacts.insert("network".into(), serde_json::to_value(&net)?);
    report.artifacts.insert("outputs".into(), outputs.into());
    Ok(report)
}

/// Plain network or probabilistic network with mean and log-variance heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Network,
    Pnn,
}

/// Trains one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub data: DataSource,
    pub split: [f64; 3],
    pub model: ModelKind,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub loss: LossSpec,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            data: DataSource::Iris,
            split: [0.7, 0.15, 0.15],
            model: ModelKind::Network,
            hidden: vec![32],
            activation: Activation::Relu,
            loss: LossSpec::PairwiseGaussian { input_std: 0.1 },
            optimizer: OptimizerConfig::new(1e-2, 200, 32),
        }
    }
}

impl ExperimentConfig for TrainConfig {
    const NAME: &'static str = "train";

    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn smoke(&mut self) {
        self.optimizer.epochs = self.optimizer.epochs.min(10);
        if let DataSource::Mnist { limit } | DataSource::Letters { limit } = &mut self.data {
            *limit = Some(limit.unwrap_or(usize::MAX).min(500));
        }
    }
}

const STREAM_SPLIT: u64 = 62;
const STREAM_TRAIN: u64 = 63;

fn accuracy(model: &Model, data: &Dataset) -> Result<Option<f64>> {
    let (Model::Net(net), Some(labels)) = (model, data.labels()) else {
        return Ok(None);
    };
    if labels.is_empty() {
        return Ok(None);
    }
    let out = net.forward_batch(&data.x)?;
    let hits = labels.iter().enumerate().filter(|(r, &l)| argmax(out.row(*r)) == l).count();
    Ok(Some(hits as f64 / labels.len() as f64))
}

/// Tables: `history` (per-epoch losses) and `metrics` (final loss and, for
/// classifiers, accuracy per split). The trained model is stored as the
/// `network` or `pnn` artifact.
pub fn run_train(cfg: &TrainConfig) -> Result<Report> {
    cfg.validate()?;
    let splits = cfg.data.splits(cfg.split, cell_seed(cfg.seed, &[STREAM_SPLIT]))?;
    let outputs = splits.train.n_classes().unwrap_or(1);
    let mut widths = vec![splits.train.n_features()];
    widths.extend(&cfg.hidden);
    widths.push(outputs);
    let mut rng = SeededRng::new(cell_seed(cfg.seed, &[STREAM_TRAIN]));
    let mut model = match cfg.model {
        ModelKind::Network => Model::Net(init_params(&MlpSpec::new(&widths, cfg.activation), &mut rng)?),
        ModelKind::Pnn => Model::Pnn(PnnNetwork::init(&widths, cfg.activation, &mut rng)?),
    };
    let val = (!splits.val.is_empty()).then_some(&splits.val);
    let hist = train(&mut model, &splits.train, val, &cfg.loss, &cfg.optimizer, &mut rng)?;

    let mut history = Table::new(&["epoch", "train_loss", "val_loss"]);
    for (e, &l) in hist.train_loss.iter().enumerate() {
        let v = hist.val_loss.get(e).copied().unwrap_or(f64::NAN);
        history.push(vec![e.into(), l.into(), v.into()]);
    }
    let mut metrics = Table::new(&["split", "n", "loss", "accuracy"]);
    for (name, d) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if d.is_empty() {
            continue;
        }
        let loss = evaluate_loss(&model, d, &cfg.loss)?;
        let acc = accuracy(&model, d)?.unwrap_or(f64::NAN);
        metrics.push(vec![name.into(), d.len().into(), loss.into(), acc.into()]);
    }
    let mut report = Report::new(TrainConfig::NAME, cfg)?;
    report.tables.insert("history".into(), history);
    report.tables.insert("metrics".into(), metrics);
    match &model {
        Model::Net(n) => report.artifacts.insert("network".into(), serde_json::to_value(n)?),
        Model::Pnn(p) => report.artifacts.insert("pnn".into(), serde_json::to_value(p)?),
    };
    if let Some(norm) = &splits.train.norm {
        report.artifacts.insert("normalization".into(), serde_json::to_value(norm)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_propagation_reports_every_method() {
        let mut cfg = PropagateConfig::default();
        cfg.smoke();
        let r = run_propagate(&cfg).unwrap();
        let t = r.table("outputs").unwrap();
        // Four compatible methods × 3 outputs, plus the skipped Cauchy row.
        assert_eq!(t.len(), 4 * 3 + 1);
        let skipped = t.filter("method", "sdp_marginal_cauchy").unwrap();
        assert!(skipped.rows[0][1].as_str().unwrap().starts_with("skipped"));
        let full = t.filter("method", "sdp_full").unwrap().numbers("location").unwrap();
        let marg = t.filter("method", "sdp_marginal_gaussian").unwrap().numbers("location").unwrap();
        assert_eq!(full, marg);
    }

    #[test]
    fn trained_network_feeds_propagation() {
        let mut cfg = TrainConfig::default();
        cfg.smoke();
        let r = run_train(&cfg).unwrap();
        assert_eq!(r.table("history").unwrap().len(), cfg.optimizer.epochs);
        assert_eq!(r.table("metrics").unwrap().len(), 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        std::fs::write(&path, serde_json::to_string(&r.artifacts["network"]).unwrap()).unwrap();
        let p = PropagateConfig {
            network: NetworkSource::File { path },
            input: InputSpec {
                family: InputFamily::Cauchy,
                location: vec![0.0; 4],
                scale: vec![0.05],
            },
            methods: vec![PropagationMethod::SdpMarginalCauchy, PropagationMethod::SdpFull],
            ..PropagateConfig::default()
        };
        let out = run_propagate(&p).unwrap();
        assert_eq!(out.table("outputs").unwrap().len(), 2 * 3);
    }

    #[test]
    fn pnn_training_on_regression_data() {
        let cfg = TrainConfig {
            data: DataSource::HeteroscedasticSine { n: 120 },
            model: ModelKind::Pnn,
            loss: LossSpec::PnnGaussianNll { input_std: 0.01 },
            optimizer: OptimizerConfig::new(1e-2, 5, 32),
            ..TrainConfig::default()
        };
        let r = run_train(&cfg).unwrap();
        assert!(r.artifacts.contains_key("pnn"));
        assert!(r.table("metrics").unwrap().numbers("accuracy").unwrap().iter().all(|a| a.is_nan()));
    }
}
