//! Configurable experiment runners that emit CSV tables and a JSON report.
//!
//! Every runner is a pure function of its config: all randomness flows from
//! `seed` through per-cell derived streams, so a re-run writes identical
//! bytes.

mod interval;
mod propagate;
mod report;
mod selective;
mod source;
mod tv;
mod twomoons;
mod w1;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{init_params, Activation, Init, MlpSpec, Network};
use crate::numerics::{derive_seed, Matrix, SeededRng};
use crate::train::{train, LossSpec, Model, OptimizerConfig};
use crate::data::Dataset;

pub use interval::{run_interval_experiment, IntervalConfig, IntervalMethod};
pub use propagate::{run_propagate, run_train, InputSpec, NetworkSource, PropagateConfig, TrainConfig};
pub use report::{Cell, Report, Table};
pub use selective::{run_selective_prediction, SelectiveConfig};
pub use source::DataSource;
pub use tv::{run_tv_experiment, TvConfig};
pub use twomoons::{run_twomoons_map, TwoMoonsConfig};
pub use w1::{relu_grid, run_w1_experiment, ReluGridConfig, ReluGridPoint, W1Config};

/// Version tag written into every JSON report.
pub const VERSION: &str = concat!("sdprop-", env!("CARGO_PKG_VERSION"));

/// Shared behaviour of experiment configs.
pub trait ExperimentConfig: Serialize + DeserializeOwned + Default + Clone {
    /// Short experiment name used in reports.
    const NAME: &'static str;

    fn seed(&self) -> u64;
    fn set_seed(&mut self, seed: u64);
    /// Shrinks the config to a run that finishes in seconds.
    fn smoke(&mut self);
    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

/// Reads a TOML config. Keys the file leaves out, at any depth, keep their
/// default values. `None` gives the default config.
pub fn load_config<C: ExperimentConfig>(path: Option<&Path>) -> Result<C> {
    let cfg: C = match path {
        Some(p) => {
            let user: toml::Table = toml::from_str(&std::fs::read_to_string(p)?).map_err(config_error)?;
            let mut merged = toml::Table::try_from(C::default()).map_err(config_error)?;
            merge_tables(&mut merged, user);
            merged.try_into().map_err(config_error)?
        }
        None => C::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Keys that select an enum variant. A table that switches variant replaces
/// the default instead of merging into it, so stale fields of the old variant
/// do not leak through.
const VARIANT_TAGS: [&str; 7] = ["type", "kind", "model", "loss", "source", "family", "method"];

fn merge_tables(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if !switches_variant(b, &u) => merge_tables(b, u),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn switches_variant(base: &toml::Table, user: &toml::Table) -> bool {
    VARIANT_TAGS.iter().any(|t| matches!((base.get(*t), user.get(*t)), (Some(a), Some(b)) if a != b))
}

/// Seed for one experiment cell, from the base seed and a path of indices.
pub fn cell_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |s, &id| derive_seed(s, id))
}

/// Architecture and optimizer for the MLPs an experiment trains itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpTraining {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub init: Init,
    pub optimizer: OptimizerConfig,
}

impl MlpTraining {
    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(&self.hidden);
        w.push(output);
        w
    }

    /// Initializes from `seed` and trains a plain network on `data`.
    pub fn fit(&self, data: &Dataset, output: usize, loss: &LossSpec, seed: u64) -> Result<Network> {
        let mut rng = SeededRng::new(seed);
        let spec = MlpSpec::new(&self.widths(data.n_features(), output), self.activation).with_init(self.init);
        let mut model = Model::Net(init_params(&spec, &mut rng)?);
        train(&mut model, data, None, loss, &self.optimizer, &mut rng)?;
        match model {
            Model::Net(n) => Ok(n),
            Model::Pnn(_) => unreachable!("plain network in, plain network out"),
        }
    }
}

/// A family of independently seeded classifiers trained on one split, as
/// used by the distance experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierNets {
    pub data: DataSource,
    pub n_nets: usize,
    /// Train, validation and test fractions; inputs are drawn from the test part.
    pub split: [f64; 3],
    pub training: MlpTraining,
}

impl Default for ClassifierNets {
    fn default() -> Self {
        ClassifierNets {
            data: DataSource::Iris,
            n_nets: 10,
            split: [0.8, 0.0, 0.2],
            training: MlpTraining {
                hidden: vec![100; 4],
                activation: Activation::Relu,
                init: Init::default(),
                optimizer: OptimizerConfig::new(1e-3, 5000, 32),
            },
        }
    }
}

const STREAM_SPLIT: u64 = 1;
const STREAM_NETS: u64 = 2;

impl ClassifierNets {
    /// Trains `n_nets` softmax classifiers and returns them with the test part.
    pub fn train(&self, seed: u64) -> Result<(Vec<Network>, Dataset)> {
        let splits = self.data.splits(self.split, cell_seed(seed, &[STREAM_SPLIT]))?;
        let classes = splits
            .train
            .n_classes()
            .ok_or_else(|| Error::Config("classifier nets need a classification dataset".into()))?;
        let nets = (0..self.n_nets)
            .map(|i| {
                self.training
                    .fit(&splits.train, classes, &LossSpec::SoftmaxCe, cell_seed(seed, &[STREAM_NETS, i as u64]))
            })
            .collect::<Result<_>>()?;
        Ok((nets, splits.test))
    }

    fn smoke(&mut self) {
        self.n_nets = self.n_nets.min(2);
        self.training.optimizer.epochs = self.training.optimizer.epochs.min(20);
    }
}

/// `n` network outputs for inputs `x + σ·z`, `z ~ N(0, I)`, evaluated in
/// chunks to bound memory.
pub(crate) fn mc_outputs(net: &Network, x: &[f64], sigma: f64, n: usize, rng: &mut SeededRng) -> Result<Matrix> {
    const CHUNK: usize = 8192;
    let d = x.len();
    let mut out = Vec::with_capacity(n * net.output_dim());
    let mut done = 0;
    while done < n {
        let rows = CHUNK.min(n - done);
        let mut batch = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            batch.extend(x.iter().map(|&v| v + sigma * rng.standard_normal()));
        }
        let y = net.forward_batch(&Matrix::new(rows, d, batch)?)?;
        out.extend_from_slice(y.as_slice());
        done += rows;
    }
    Matrix::new(n, net.output_dim(), out)
}

fn check_nonneg(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Config(format!("{name} must be finite and ≥ 0, got {values:?}")));
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str<C: ExperimentConfig>(text: &str) -> Result<C> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, text).unwrap();
        load_config(Some(&p))
    }

    #[test]
    fn nested_overrides_keep_sibling_defaults() {
        let cfg: TvConfig = load_str("[nets.training.optimizer]\nepochs = 7\n").unwrap();
        let d = TvConfig::default();
        assert_eq!(cfg.nets.training.optimizer.epochs, 7);
        assert_eq!(cfg.nets.training.optimizer.lr, d.nets.training.optimizer.lr);
        assert_eq!(cfg.nets.training.hidden, d.nets.training.hidden);
        assert_eq!(cfg.sigmas, d.sigmas);
    }

    #[test]
    fn switching_variant_drops_old_fields() {
        let cfg: TwoMoonsConfig = load_str("n = 40\n").unwrap();
        assert_eq!(cfg.n, 40);
        let cfg: SelectiveConfig = load_str("[in_dist]\nsource = \"iris\"\n").unwrap();
        assert_eq!(cfg.in_dist, DataSource::Iris);
        assert!(matches!(load_str::<TvConfig>("bogus = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn cell_seeds_differ_by_path() {
        assert_ne!(cell_seed(1, &[0, 1]), cell_seed(1, &[1, 0]));
        assert_eq!(cell_seed(1, &[2, 3]), cell_seed(1, &[2, 3]));
        assert_eq!(cell_seed(9, &[]), 9);
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn toml_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tv.toml");
        std::fs::write(&p, "seed = 42\nsigmas = [0.5]\n").unwrap();
        let cfg: TvConfig = load_config(Some(&p)).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.sigmas, vec![0.5]);
        assert_eq!(cfg.n_inputs, TvConfig::default().n_inputs);

        std::fs::write(&p, "sigmas = [-1.0]\n").unwrap();
        assert!(matches!(load_config::<TvConfig>(Some(&p)), Err(Error::Config(_))));
        std::fs::write(&p, "sigmas = \"nope\"\n").unwrap();
        assert!(matches!(load_config::<TvConfig>(Some(&p)), Err(Error::Config(_))));
    }
}
