use serde::{Deserialize, Serialize};

use super::{cell_seed, DataSource, ExperimentConfig, MlpTraining, Report, Table};
use crate::distprop::{propagate, MarginalGaussian, PropagationMethod};
use crate::error::{Error, Result};
use crate::losses::pairwise_gaussian_prob;
use crate::network::{Activation, Init, Network};
use crate::numerics::SeededRng;
use crate::train::{LossSpec, OptimizerConfig};

/// Uncertainty map of a two-moons classifier trained with the pairwise
/// Gaussian loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoMoonsConfig {
    pub seed: u64,
    pub n: usize,
    pub noise: f64,
    pub training: MlpTraining,
    /// Input standard deviation for training and for the map.
    pub input_std: f64,
    /// `[x_min, x_max, y_min, y_max]`
    pub bounds: [f64; 4],
    /// Grid points per axis.
    pub resolution: usize,
}

impl Default for TwoMoonsConfig {
    fn default() -> Self {
        TwoMoonsConfig {
            seed: 0,
            n: 500,
            noise: 0.1,
            training: MlpTraining {
                hidden: vec![64, 64],
                activation: Activation::Relu,
                init: Init::default(),
                optimizer: OptimizerConfig::new(1e-2, 1000, 32),
            },
            input_std: 0.1,
            bounds: [-2.0, 3.0, -1.5, 2.0],
            resolution: 60,
        }
    }
}

impl ExperimentConfig for TwoMoonsConfig {
    const NAME: &'static str = "two_moons";

    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn smoke(&mut self) {
        self.n = self.n.min(200);
        self.training.optimizer.epochs = self.training.optimizer.epochs.min(30);
        self.resolution = self.resolution.min(15);
    }

    fn validate(&self) -> Result<()> {
        let [x0, x1, y0, y1] = self.bounds;
        if !(x0 < x1 && y0 < y1) || self.resolution < 2 || !(self.input_std > 0.0) {
            return Err(Error::Config("bounds must be ordered, resolution ≥ 2 and input_std > 0".into()));
        }
        Ok(())
    }
}

const STREAM_DATA: u64 = 50;
const STREAM_MODEL: u64 = 51;

/// Predictive spread at `x`: under `N(x, σ²I)` pushed through the
/// linearized network, the standard deviation of each pairwise score
/// difference `X_i − X_j`, averaged over pairs. The pairwise loss only sees
/// these differences, so a shift shared by all scores does not count. Also
/// returns the probability that class 1 outscores class 0.
pub fn predictive_scale(net: &Network, x: &[f64], input_std: f64) -> Result<(f64, f64)> {
    let input = MarginalGaussian::isotropic(x.to_vec(), input_std)?.into();
    let out = propagate(net, &input, PropagationMethod::SdpFull, &mut SeededRng::new(0))?;
    let fg = out.as_full_gaussian().expect("Gaussian in, Gaussian out");
    let c = fg.cov().matrix();
    let k = fg.dim();
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += (c[(i, i)] + c[(j, j)] - 2.0 * c[(i, j)]).max(0.0).sqrt();
        }
    }
    let pairs = (k * (k - 1) / 2) as f64;
    let p1 = pairwise_gaussian_prob(fg.mean()[1], fg.mean()[0], c[(1, 1)], c[(0, 0)], c[(0, 1)])?;
    Ok((total / pairs, p1))
}

/// Trains on freshly generated two-moons data and evaluates a regular grid
/// over `bounds`, edges included. Tables: `grid` (x, y, uncertainty, p1),
/// `data` (training points) and `summary` (mean uncertainty over the training
/// points, at the two class centroids and at the four box corners). The
/// centroid of a moon lies in the hollow of its arc, off the data.
pub fn run_twomoons_map(cfg: &TwoMoonsConfig) -> Result<Report> {
    cfg.validate()?;
    let data = DataSource::TwoMoons { n: cfg.n, noise: cfg.noise }.load(cell_seed(cfg.seed, &[STREAM_DATA]))?;
    let loss = LossSpec::PairwiseGaussian { input_std: cfg.input_std };
    let net = cfg.training.fit(&data, 2, &loss, cell_seed(cfg.seed, &[STREAM_MODEL]))?;

    let [x0, x1, y0, y1] = cfg.bounds;
    let steps = (cfg.resolution - 1) as f64;
    let mut grid = Table::new(&["x", "y", "uncertainty", "p1"]);
    for i in 0..cfg.resolution {
        let y = y0 + (y1 - y0) * i as f64 / steps;
        for j in 0..cfg.resolution {
            let x = x0 + (x1 - x0) * j as f64 / steps;
            let (u, p1) = predictive_scale(&net, &[x, y], cfg.input_std)?;
            grid.push(vec![x.into(), y.into(), u.into(), p1.into()]);
        }
    }

    let labels = data.labels().expect("two moons are labelled");
    let mut points = Table::new(&["x", "y", "label"]);
    let mut centroids = [[0.0; 2]; 2];
    let mut counts = [0usize; 2];
    let mut data_u = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        let p = data.x.row(r);
        points.push(vec![p[0].into(), p[1].into(), l.into()]);
        data_u += predictive_scale(&net, p, cfg.input_std)?.0 / labels.len() as f64;
        centroids[l][0] += p[0];
        centroids[l][1] += p[1];
        counts[l] += 1;
    }
    let mut centroid_u = 0.0;
    for (c, k) in centroids.iter().zip(counts) {
        centroid_u += predictive_scale(&net, &[c[0] / k as f64, c[1] / k as f64], cfg.input_std)?.0 / 2.0;
    }
    let mut corner_u = 0.0;
    for corner in [[x0, y0], [x0, y1], [x1, y0], [x1, y1]] {
        corner_u += predictive_scale(&net, &corner, cfg.input_std)?.0 / 4.0;
    }
    let mut summary = Table::new(&["data_uncertainty", "centroid_uncertainty", "corner_uncertainty"]);
    summary.push(vec![data_u.into(), centroid_u.into(), corner_u.into()]);

    let mut report = Report::new(TwoMoonsConfig::NAME, cfg)?;
    report.tables.insert("grid".into(), grid);
    report.tables.insert("data".into(), points);
    report.tables.insert("summary".into(), summary);
    Ok(report)
}
