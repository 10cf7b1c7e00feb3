use serde::{Deserialize, Serialize};

use super::{cell_seed, check_nonneg, mc_outputs, mean_std, ClassifierNets, ExperimentConfig, Report, Table};
use crate::distprop::{propagate, MarginalGaussian, PropagationMethod};
use crate::error::{Error, Result};
use crate::metrics::{tv_binned, TV_MIN_SAMPLES};
use crate::numerics::{sample, SeededRng};

/// Total-variation accuracy of propagation methods against a Monte-Carlo
/// oracle on trained classifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvConfig {
    pub seed: u64,
    pub nets: ClassifierNets,
    /// Inputs propagated per network, taken from the test part.
    pub n_inputs: usize,
    /// Isotropic input standard deviations.
    pub sigmas: Vec<f64>,
    pub methods: Vec<PropagationMethod>,
    /// Samples in the oracle and in each method's output sample set.
    pub oracle_samples: usize,
    pub bins_per_dim: usize,
    /// Adds an `mc_reference` row that replays the oracle's own stream, so
    /// its `1 − TV` must be exactly 1.
    pub self_check: bool,
}

impl Default for TvConfig {
    fn default() -> Self {
        TvConfig {
            seed: 0,
            nets: ClassifierNets::default(),
            n_inputs: 10,
            sigmas: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            methods: vec![
                PropagationMethod::SdpFull,
                PropagationMethod::McEstimate { k: 100 },
                PropagationMethod::SdpMarginalGaussian,
                PropagationMethod::MarginalMomentMatch,
            ],
            oracle_samples: 1_000_000,
            bins_per_dim: 10,
            self_check: false,
        }
    }
}

impl ExperimentConfig for TvConfig {
    const NAME: &'static str = "tv";

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
        self.oracle_samples = self.oracle_samples.min(10_000);
    }

    fn validate(&self) -> Result<()> {
        check_nonneg("sigmas", &self.sigmas)?;
        if self.oracle_samples < TV_MIN_SAMPLES {
            return Err(Error::Config(format!("oracle_samples must be at least {TV_MIN_SAMPLES}")));
        }
        if self.bins_per_dim == 0 {
            return Err(Error::Config("bins_per_dim must be positive".into()));
        }
        Ok(())
    }
}

const STREAM_ORACLE: u64 = 10;
const STREAM_METHOD: u64 = 11;

/// Runs the TV comparison. Tables: `cells` (one row per net, input, σ and
/// method) and `summary` (mean and std of `1 − TV` over nets and inputs).
pub fn run_tv_experiment(cfg: &TvConfig) -> Result<Report> {
    cfg.validate()?;
    let (nets, test) = cfg.nets.train(cfg.seed)?;
    let n_inputs = cfg.n_inputs.min(test.len());
    let mut names: Vec<String> = cfg.methods.iter().map(|m| m.name()).collect();
    if cfg.self_check {
        names.push("mc_reference".into());
    }
    let mut cells = Table::new(&["net", "input", "sigma", "method", "one_minus_tv"]);
    let mut collected = vec![vec![Vec::new(); names.len()]; cfg.sigmas.len()];
    for (i, net) in nets.iter().enumerate() {
        for j in 0..n_inputs {
            let x = test.x.row(j);
            for (s, &sigma) in cfg.sigmas.iter().enumerate() {
                let id = [i as u64, j as u64, s as u64];
                let oracle_seed = cell_seed(cfg.seed, &[&[STREAM_ORACLE][..], &id].concat());
                let oracle = mc_outputs(net, x, sigma, cfg.oracle_samples, &mut SeededRng::new(oracle_seed))?;
                let input = MarginalGaussian::isotropic(x.to_vec(), sigma)?.into();
                let mut scores = Vec::with_capacity(names.len());
                for (m, &method) in cfg.methods.iter().enumerate() {
                    let mut rng = SeededRng::new(cell_seed(cfg.seed, &[&[STREAM_METHOD][..], &id, &[m as u64]].concat()));
                    let out = propagate(net, &input, method, &mut rng)?;
                    let approx = sample(&out, cfg.oracle_samples, &mut rng)?;
                    scores.push(1.0 - tv_binned(&approx, &oracle, cfg.bins_per_dim)?);
                }
                if cfg.self_check {
                    let replay = mc_outputs(net, x, sigma, cfg.oracle_samples, &mut SeededRng::new(oracle_seed))?;
                    scores.push(1.0 - tv_binned(&replay, &oracle, cfg.bins_per_dim)?);
                }
                for (m, score) in scores.into_iter().enumerate() {
                    cells.push(vec![i.into(), j.into(), sigma.into(), names[m].as_str().into(), score.into()]);
                    collected[s][m].push(score);
                }
            }
        }
    }
    let mut summary = Table::new(&["sigma", "method", "mean_one_minus_tv", "std_one_minus_tv", "n"]);
    for (s, &sigma) in cfg.sigmas.iter().enumerate() {
        for (m, name) in names.iter().enumerate() {
            let (mean, std) = mean_std(&collected[s][m]);
            summary.push(vec![sigma.into(), name.as_str().into(), mean.into(), std.into(), collected[s][m].len().into()]);
        }
    }
    let mut report = Report::new(TvConfig::NAME, cfg)?;
    report.tables.insert("cells".into(), cells);
    report.tables.insert("summary".into(), summary);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoke_run_fills_every_cell_and_self_check_is_exact() {
        let mut cfg = TvConfig::default();
        cfg.smoke();
        cfg.nets.training.hidden = vec![16, 16];
        cfg.self_check = true;
        let r = run_tv_experiment(&cfg).unwrap();
        let summary = r.table("summary").unwrap();
        assert_eq!(summary.len(), cfg.sigmas.len() * (cfg.methods.len() + 1));
        assert_eq!(r.table("cells").unwrap().len(), 2 * 2 * summary.len());
        let reference = summary.filter("method", "mc_reference").unwrap();
        assert!(reference.numbers("mean_one_minus_tv").unwrap().iter().all(|&v| v == 1.0));
        for v in summary.numbers("mean_one_minus_tv").unwrap() {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
