use serde::{Deserialize, Serialize};

use super::{cell_seed, check_nonneg, mc_outputs, mean_std, ClassifierNets, ExperimentConfig, Report, Table};
use crate::distprop::{propagate, MarginalGaussian, PropagationMethod};
use crate::error::{Error, Result};
use crate::metrics::{sliced_w1, wasserstein1_1d};
use crate::network::{Activation, Layer, Network};
use crate::numerics::{sample, SeededRng};

/// Single-ReLU sweep: `ReLU(N(μ, σ²))` against its SDP and moment-matched
/// Gaussian approximations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReluGridConfig {
    pub mu_min: f64,
    pub mu_max: f64,
    pub points: usize,
    pub sigma: f64,
    pub samples: usize,
}

impl Default for ReluGridConfig {
    fn default() -> Self {
        ReluGridConfig {
            mu_min: -0.5,
            mu_max: 0.5,
            points: 41,
            sigma: 0.1,
            samples: 100_000,
        }
    }
}

impl ReluGridConfig {
    pub fn mus(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.mu_min];
        }
        let step = (self.mu_max - self.mu_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.mu_min + step * i as f64).collect()
    }
}

/// Wasserstein-1 accuracy of propagation methods on trained classifiers, plus
/// the single-ReLU sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct W1Config {
    pub seed: u64,
    pub nets: ClassifierNets,
    pub n_inputs: usize,
    pub sigmas: Vec<f64>,
    pub methods: Vec<PropagationMethod>,
    /// Size of both the oracle and the approximate sample sets.
    pub samples: usize,
    pub n_projections: usize,
    pub relu_grid: ReluGridConfig,
}

impl Default for W1Config {
    fn default() -> Self {
        W1Config {
            seed: 0,
            nets: ClassifierNets::default(),
            n_inputs: 10,
            sigmas: vec![0.01, 0.1, 1.0],
            methods: vec![
                PropagationMethod::SdpFull,
                PropagationMethod::SdpMarginalGaussian,
                PropagationMethod::MarginalMomentMatch,
            ],
            samples: 30_000,
            n_projections: 64,
            relu_grid: ReluGridConfig::default(),
        }
    }
}

impl ExperimentConfig for W1Config {
    const NAME: &'static str = "w1";

    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn smoke(&mut self) {
        self.nets.smoke();
        self.n_inputs = self.n_inputs.min(2);
        self.sigmas.truncate(2);
        self.samples = self.samples.min(2000);
        self.n_projections = self.n_projections.min(16);
        self.relu_grid.points = self.relu_grid.points.min(11);
        self.relu_grid.samples = self.relu_grid.samples.min(5000);
    }

    fn validate(&self) -> Result<()> {
        check_nonneg("sigmas", &self.sigmas)?;
        check_nonneg("relu_grid.sigma", &[self.relu_grid.sigma])?;
        if self.samples == 0 || self.relu_grid.samples == 0 || self.relu_grid.points == 0 || self.n_projections == 0 {
            return Err(Error::Config("sample counts, grid points and projections must be positive".into()));
        }
        Ok(())
    }
}

const STREAM_ORACLE: u64 = 20;
const STREAM_METHOD: u64 = 21;
const STREAM_PROJECTIONS: u64 = 22;
const STREAM_GRID: u64 = 23;

/// Per-point W₁ of the two approximations of `ReLU(N(μ, σ²))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReluGridPoint {
    pub mu: f64,
    pub w1_sdp: f64,
    pub w1_moment_match: f64,
}

/// Evaluates the single-ReLU sweep. One set of standard normals `z` drives
/// the truth `ReLU(μ + σz)` and both Gaussian approximations `m + s·z`; all
/// three are monotone in `z`, so the sorted-sample distance is a direct
/// estimate of the quantile-coupling integral that defines W₁.
pub fn relu_grid(cfg: &ReluGridConfig, seed: u64) -> Result<Vec<ReluGridPoint>> {
    let relu = Network::new(1, vec![Layer::Activation(Activation::Relu)])?;
    let mut rng = SeededRng::new(seed);
    let z: Vec<f64> = (0..cfg.samples).map(|_| rng.standard_normal()).collect();
    let approx = |method: PropagationMethod, mu: f64| -> Result<Vec<f64>> {
        let input = MarginalGaussian::new(vec![mu], vec![cfg.sigma])?.into();
        let out = propagate(&relu, &input, method, &mut SeededRng::new(0))?;
        let (m, s) = (out.location()[0], out.marginal_scale()[0]);
        Ok(z.iter().map(|&zi| m + s * zi).collect())
    };
    cfg.mus()
        .into_iter()
        .map(|mu| {
            let truth: Vec<f64> = z.iter().map(|&zi| (mu + cfg.sigma * zi).max(0.0)).collect();
            Ok(ReluGridPoint {
                mu,
                w1_sdp: wasserstein1_1d(&truth, &approx(PropagationMethod::SdpMarginalGaussian, mu)?)?,
                w1_moment_match: wasserstein1_1d(&truth, &approx(PropagationMethod::MarginalMomentMatch, mu)?)?,
            })
        })
        .collect()
}

/// Runs both parts. Tables: `cells` and `summary` for the sliced W₁ on the
/// trained networks, `relu_grid` for the single-ReLU sweep.
pub fn run_w1_experiment(cfg: &W1Config) -> Result<Report> {
    cfg.validate()?;
    let (nets, test) = cfg.nets.train(cfg.seed)?;
    let n_inputs = cfg.n_inputs.min(test.len());
    let names: Vec<String> = cfg.methods.iter().map(|m| m.name()).collect();
    let mut cells = Table::new(&["net", "input", "sigma", "method", "w1"]);
    let mut collected = vec![vec![Vec::new(); names.len()]; cfg.sigmas.len()];
    let sliced = nets.first().map(|n| n.output_dim() >= 2).unwrap_or(false);
    for (i, net) in nets.iter().enumerate() {
        for j in 0..n_inputs {
            let x = test.x.row(j);
            for (s, &sigma) in cfg.sigmas.iter().enumerate() {
                let id = [i as u64, j as u64, s as u64];
                let mut oracle_rng = SeededRng::new(cell_seed(cfg.seed, &[&[STREAM_ORACLE][..], &id].concat()));
                let oracle = mc_outputs(net, x, sigma, cfg.samples, &mut oracle_rng)?;
                let input = MarginalGaussian::isotropic(x.to_vec(), sigma)?.into();
                for (m, &method) in cfg.methods.iter().enumerate() {
                    let mut rng = SeededRng::new(cell_seed(cfg.seed, &[&[STREAM_METHOD][..], &id, &[m as u64]].concat()));
                    let approx = sample(&propagate(net, &input, method, &mut rng)?, cfg.samples, &mut rng)?;
                    // Every method sees the same projection directions.
                    let mut proj = SeededRng::new(cell_seed(cfg.seed, &[&[STREAM_PROJECTIONS][..], &id].concat()));
                    let w1 = if sliced {
                        sliced_w1(&approx, &oracle, cfg.n_projections, &mut proj)?
                    } else {
                        wasserstein1_1d(approx.as_slice(), oracle.as_slice())?
                    };
                    cells.push(vec![i.into(), j.into(), sigma.into(), names[m].as_str().into(), w1.into()]);
                    collected[s][m].push(w1);
                }
            }
        }
    }
    let mut summary = Table::new(&["sigma", "method", "mean_w1", "std_w1", "n"]);
    for (s, &sigma) in cfg.sigmas.iter().enumerate() {
        for (m, name) in names.iter().enumerate() {
            let (mean, std) = mean_std(&collected[s][m]);
            summary.push(vec![sigma.into(), name.as_str().into(), mean.into(), std.into(), collected[s][m].len().into()]);
        }
    }
    let mut grid = Table::new(&["mu", "sigma", "w1_sdp", "w1_moment_match"]);
    for p in relu_grid(&cfg.relu_grid, cell_seed(cfg.seed, &[STREAM_GRID]))? {
        grid.push(vec![p.mu.into(), cfg.relu_grid.sigma.into(), p.w1_sdp.into(), p.w1_moment_match.into()]);
    }
    let mut report = Report::new(W1Config::NAME, cfg)?;
    report.tables.insert("cells".into(), cells);
    report.tables.insert("summary".into(), summary);
    report.tables.insert("relu_grid".into(), grid);
    Ok(report)
}
