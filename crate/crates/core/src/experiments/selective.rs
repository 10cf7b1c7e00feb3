use serde::{Deserialize, Serialize};

use super::{cell_seed, mean_std, DataSource, ExperimentConfig, MlpTraining, Report, Table};
use crate::data::Dataset;
use crate::distprop::{propagate, MarginalCauchy, MarginalGaussian, PropagationMethod};
use crate::error::{Error, Result};
use crate::metrics::{risk_coverage, uncertainty_scores_with, PairwiseAggregation, RiskCoverageCurve, UncertaintyKind};
use crate::network::{argmax, Activation, Init, Network};
use crate::numerics::{Matrix, SeededRng};
use crate::train::{LossSpec, OptimizerConfig};

/// Selective prediction on a test set that mixes in-distribution inputs with
/// an equal number of out-of-distribution inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectiveConfig {
    pub seed: u64,
    pub in_dist: DataSource,
    pub ood: DataSource,
    /// Fraction of the in-distribution data used for training; the rest is
    /// the in-distribution test part.
    pub train_fraction: f64,
    pub n_seeds: usize,
    pub training: MlpTraining,
    /// Input standard deviation for pairwise-Gaussian training and scoring.
    pub input_std: f64,
    /// Input Cauchy scale for the pairwise-Cauchy score.
    pub cauchy_scale: f64,
    /// How pairwise win probabilities are combined into class weights.
    pub aggregation: PairwiseAggregation,
    /// Coverage points per emitted risk-coverage curve.
    pub curve_points: usize,
}

impl Default for SelectiveConfig {
    fn default() -> Self {
        SelectiveConfig {
            seed: 0,
            in_dist: DataSource::Mnist { limit: None },
            ood: DataSource::Letters { limit: None },
            train_fraction: 0.6,
            n_seeds: 3,
            training: MlpTraining {
                hidden: vec![256],
                activation: Activation::Relu,
                init: Init::default(),
                optimizer: OptimizerConfig::new(1e-3, 20, 64),
            },
            input_std: 0.1,
            cauchy_scale: 0.01,
            aggregation: PairwiseAggregation::Product,
            curve_points: 100,
        }
    }
}

impl ExperimentConfig for SelectiveConfig {
    const NAME: &'static str = "selective";

    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn smoke(&mut self) {
        self.in_dist = DataSource::Mnist { limit: Some(1000) };
        self.n_seeds = 1;
        self.training.hidden = vec![32];
        self.training.optimizer.epochs = self.training.optimizer.epochs.min(2);
        self.curve_points = self.curve_points.min(20);
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        if !(self.input_std >= 0.0 && self.cauchy_scale >= 0.0) || self.n_seeds == 0 || self.curve_points == 0 {
            return Err(Error::Config("scales must be ≥ 0, n_seeds and curve_points positive".into()));
        }
        Ok(())
    }
}

/// A scoring rule applied to one trained model.
#[derive(Clone, Copy, Debug)]
enum Rule {
    Softmax,
    PairwiseGauss,
    PairwiseCauchy,
}

impl Rule {
    fn name(&self) -> &'static str {
        match self {
            Rule::Softmax => "softmax_entropy",
            Rule::PairwiseGauss => "pairwise_gauss_entropy",
            Rule::PairwiseCauchy => "pairwise_cauchy_entropy",
        }
    }
}

const STREAM_SPLIT: u64 = 40;
const STREAM_OOD: u64 = 41;
const STREAM_MODEL: u64 = 42;
const STREAM_RANDOM: u64 = 43;

/// Mixed test set: all in-distribution test rows followed by as many OOD
/// rows, or both truncated to the smaller count.
struct Mixed {
    x: Matrix,
    /// Class label for in-distribution rows, `None` for OOD rows.
    labels: Vec<Option<usize>>,
}

fn mixed_test(test_in: &Dataset, ood: &Dataset, rng: &mut SeededRng) -> Result<Mixed> {
    let n = test_in.len().min(ood.len());
    if n == 0 {
        return Err(Error::Empty);
    }
    let ood_rows = rng.permutation(ood.len());
    let mut data = Vec::with_capacity(2 * n * test_in.n_features());
    let mut labels = Vec::with_capacity(2 * n);
    let in_labels = test_in.labels().ok_or(Error::Config("in-distribution data needs labels".into()))?;
    for r in 0..n {
        data.extend_from_slice(test_in.x.row(r));
        labels.push(Some(in_labels[r]));
    }
    for &r in &ood_rows[..n] {
        data.extend_from_slice(ood.x.row(r));
        labels.push(None);
    }
    Ok(Mixed {
        x: Matrix::new(2 * n, test_in.n_features(), data)?,
        labels,
    })
}

fn score(net: &Network, x: &[f64], rule: Rule, cfg: &SelectiveConfig) -> Result<f64> {
    let mut unused = SeededRng::new(0);
    let out = match rule {
        Rule::Softmax => MarginalGaussian::isotropic(net.forward(x)?, 0.0)?.into(),
        Rule::PairwiseGauss => propagate(
            net,
            &MarginalGaussian::isotropic(x.to_vec(), cfg.input_std)?.into(),
            PropagationMethod::SdpFull,
            &mut unused,
        )?,
        Rule::PairwiseCauchy => propagate(
            net,
            &MarginalCauchy::isotropic(x.to_vec(), cfg.cauchy_scale)?.into(),
            PropagationMethod::SdpFull,
            &mut unused,
        )?,
    };
    let kind = match rule {
        Rule::Softmax => UncertaintyKind::SoftmaxEntropy,
        Rule::PairwiseGauss => UncertaintyKind::PairwiseGaussEntropy,
        Rule::PairwiseCauchy => UncertaintyKind::PairwiseCauchyEntropy,
    };
    uncertainty_scores_with(&out, kind, cfg.aggregation)
}

/// Trains a softmax and a pairwise-Gaussian classifier per seed and scores
/// the mixed test set with every applicable rule. OOD rows always count as
/// errors. Tables: `rcauc` (per seed), `summary` (mean over seeds) and
/// `curves` (risk at evenly spaced coverage points). Two reference rules are
/// included: `oracle` ranks correct predictions of the softmax model first,
/// `random` ranks uniformly at random.
pub fn run_selective_prediction(cfg: &SelectiveConfig) -> Result<Report> {
    cfg.validate()?;
    let full = cfg.in_dist.load(cfg.seed)?;
    let ood = cfg.ood.load(cfg.seed)?;
    let classes = full.n_classes().ok_or(Error::Config("in-distribution data needs labels".into()))?;
    let mut rc = Table::new(&["seed", "model", "score", "rcauc", "selective_auc", "in_dist_accuracy"]);
    let mut curves = Table::new(&["seed", "model", "score", "coverage", "selective_risk", "joint_risk"]);
    let mut by_rule: Vec<(String, String, Vec<f64>)> = Vec::new();
    for s in 0..cfg.n_seeds {
        let s64 = s as u64;
        let splits = full.split([cfg.train_fraction, 0.0, 1.0 - cfg.train_fraction], cell_seed(cfg.seed, &[STREAM_SPLIT, s64]))?;
        let mixed = mixed_test(&splits.test, &ood, &mut SeededRng::new(cell_seed(cfg.seed, &[STREAM_OOD, s64])))?;
        let models = [
            ("softmax_ce", LossSpec::SoftmaxCe, vec![Rule::Softmax, Rule::PairwiseGauss, Rule::PairwiseCauchy]),
            (
                "pairwise_gaussian",
                LossSpec::PairwiseGaussian { input_std: cfg.input_std },
                vec![Rule::Softmax, Rule::PairwiseGauss, Rule::PairwiseCauchy],
            ),
        ];
        let mut softmax_correct = Vec::new();
        for (k, (model_name, loss, rules)) in models.iter().enumerate() {
            let net = cfg.training.fit(&splits.train, classes, loss, cell_seed(cfg.seed, &[STREAM_MODEL, s64, k as u64]))?;
            let logits = net.forward_batch(&mixed.x)?;
            let correct: Vec<bool> = mixed
                .labels
                .iter()
                .enumerate()
                .map(|(r, l)| *l == Some(argmax(logits.row(r))))
                .collect();
            let n_in = mixed.labels.iter().filter(|l| l.is_some()).count();
            let accuracy = correct.iter().filter(|&&c| c).count() as f64 / n_in as f64;
            if k == 0 {
                softmax_correct = correct.clone();
            }
            for &rule in rules {
                let scores = mixed.x.rows_iter().map(|x| score(&net, x, rule, cfg)).collect::<Result<Vec<_>>>()?;
                let curve = risk_coverage(&scores, &correct)?;
                emit(&mut rc, &mut curves, &mut by_rule, s, model_name, rule.name(), &curve, accuracy, cfg.curve_points);
            }
        }
        let oracle: Vec<f64> = softmax_correct.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        let n_in = mixed.labels.iter().filter(|l| l.is_some()).count();
        let acc = softmax_correct.iter().filter(|&&c| c).count() as f64 / n_in as f64;
        let curve = risk_coverage(&oracle, &softmax_correct)?;
        emit(&mut rc, &mut curves, &mut by_rule, s, "softmax_ce", "oracle", &curve, acc, cfg.curve_points);
        let mut rng = SeededRng::new(cell_seed(cfg.seed, &[STREAM_RANDOM, s64]));
        let random: Vec<f64> = (0..oracle.len()).map(|_| rng.uniform()).collect();
        let curve = risk_coverage(&random, &softmax_correct)?;
        emit(&mut rc, &mut curves, &mut by_rule, s, "softmax_ce", "random", &curve, acc, cfg.curve_points);
    }
    let mut summary = Table::new(&["model", "score", "mean_rcauc", "std_rcauc", "n_seeds"]);
    for (model, rule, values) in &by_rule {
        let (m, sd) = mean_std(values);
        summary.push(vec![model.as_str().into(), rule.as_str().into(), m.into(), sd.into(), values.len().into()]);
    }
    let mut report = Report::new(SelectiveConfig::NAME, cfg)?;
    report.tables.insert("rcauc".into(), rc);
    report.tables.insert("summary".into(), summary);
    report.tables.insert("curves".into(), curves);
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn emit(
    rc: &mut Table,
    curves: &mut Table,
    by_rule: &mut Vec<(String, String, Vec<f64>)>,
    seed: usize,
    model: &str,
    rule: &str,
    curve: &RiskCoverageCurve,
    accuracy: f64,
    points: usize,
) {
    rc.push(vec![
        seed.into(),
        model.into(),
        rule.into(),
        curve.rcauc.into(),
        curve.selective_auc().into(),
        accuracy.into(),
    ]);
    match by_rule.iter_mut().find(|(m, r, _)| m == model && r == rule) {
        Some((_, _, v)) => v.push(curve.rcauc),
        None => by_rule.push((model.to_string(), rule.to_string(), vec![curve.rcauc])),
    }
    let n = curve.coverage.len();
    for p in 1..=points {
        let k = (p * n).div_ceil(points).max(1);
        curves.push(vec![
            seed.into(),
            model.into(),
            rule.into(),
            curve.coverage[k - 1].into(),
            curve.selective_risk[k - 1].into(),
            curve.joint_risk[k - 1].into(),
        ]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoke_run_scores_every_rule() {
        let mut cfg = SelectiveConfig::default();
        cfg.smoke();
        cfg.in_dist = DataSource::Mnist { limit: Some(400) };
        cfg.ood = DataSource::Letters { limit: Some(300) };
        let r = run_selective_prediction(&cfg).unwrap();
        let summary = r.table("summary").unwrap();
        let rules: Vec<&str> = summary.rows.iter().map(|row| row[1].as_str().unwrap()).collect();
        assert_eq!(
            rules,
            vec![
                "softmax_entropy",
                "pairwise_gauss_entropy",
                "pairwise_cauchy_entropy",
                "softmax_entropy",
                "pairwise_gauss_entropy",
                "pairwise_cauchy_entropy",
                "oracle",
                "random"
            ]
        );
        assert_eq!(r.table("curves").unwrap().len(), 8 * cfg.curve_points);
        // Oracle ranking of a half-OOD set: exactly 1/8 when everything
        // in-distribution is correct, and never more than a random ranking.
        let rc = r.table("rcauc").unwrap();
        let oracle = rc.filter("score", "oracle").unwrap().numbers("rcauc").unwrap()[0];
        let random = rc.filter("score", "random").unwrap().numbers("rcauc").unwrap()[0];
        assert!(oracle >= 0.125 - 1e-12 && oracle <= random);
    }

    #[test]
    fn mixed_set_is_half_ood() {
        let digits = DataSource::Mnist { limit: Some(30) }.load(0).unwrap();
        let letters = DataSource::Letters { limit: Some(20) }.load(0).unwrap();
        let m = mixed_test(&digits, &letters, &mut SeededRng::new(1)).unwrap();
        assert_eq!(m.labels.len(), 40);
        assert_eq!(m.labels.iter().filter(|l| l.is_none()).count(), 20);
    }
}
