use serde::{Deserialize, Serialize};

use crate::distprop::Distribution;
use crate::error::{Error, Result};
use crate::losses::softmax;
use crate::numerics::{log_std_cauchy_cdf, log_std_normal_cdf};

/// How a predictive distribution over class scores becomes a certainty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    /// Softmax of the locations.
    SoftmaxEntropy,
    /// Class weights from pairwise Gaussian win probabilities.
    PairwiseGaussEntropy,
    /// Class weights from pairwise Cauchy win probabilities.
    PairwiseCauchyEntropy,
}

/// How pairwise win probabilities `P(X_i > X_j)` become class weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseAggregation {
    /// Mean over `j ≠ i`, then normalized to sum to one.
    #[default]
    Mean,
    /// Product over `j ≠ i`, then normalized: the chance that class `i` beats
    /// every rival if the pairwise events were independent.
    Product,
}

/// Negative entropy of a class distribution derived from `output`; larger
/// means more certain. Pairwise kinds use [`PairwiseAggregation::Mean`].
pub fn uncertainty_scores(output: &Distribution, kind: UncertaintyKind) -> Result<f64> {
    uncertainty_scores_with(output, kind, PairwiseAggregation::Mean)
}

/// [`uncertainty_scores`] with a choice of pairwise aggregation. The softmax
/// kind ignores `aggregation`.
pub fn uncertainty_scores_with(
    output: &Distribution,
    kind: UncertaintyKind,
    aggregation: PairwiseAggregation,
) -> Result<f64> {
    let n = output.dim();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 classes, got {n}")));
    }
    let probs = match kind {
        UncertaintyKind::SoftmaxEntropy => softmax(output.location()),
        UncertaintyKind::PairwiseGaussEntropy | UncertaintyKind::PairwiseCauchyEntropy => {
            let log_pair = pairwise_log_probs(output, kind)?;
            let log_pair = &log_pair;
            let rivals = move |i: usize| (0..n).filter(move |&j| j != i).map(move |j| log_pair[i * n + j]);
            match aggregation {
                PairwiseAggregation::Mean => {
                    let w: Vec<f64> = (0..n).map(|i| rivals(i).map(f64::exp).sum::<f64>() / (n - 1) as f64).collect();
                    let total: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / total).collect()
                }
                // The class with the largest location wins each duel with
                // probability at least ½, so its log weight is finite.
                PairwiseAggregation::Product => softmax(&(0..n).map(|i| rivals(i).sum()).collect::<Vec<f64>>()),
            }
        }
    };
    Ok(probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum())
}

/// Row-major `n × n` table of `ln P(X_i > X_j)`; the diagonal is unused.
fn pairwise_log_probs(output: &Distribution, kind: UncertaintyKind) -> Result<Vec<f64>> {
    let n = output.dim();
    let loc = output.location();
    let pair: Box<dyn Fn(usize, usize) -> Result<f64> + '_> = match (kind, output) {
        (UncertaintyKind::PairwiseGaussEntropy, Distribution::FullGaussian(g)) => {
            let c = g.cov().matrix();
            Box::new(move |i, j| log_gaussian_win(loc[i] - loc[j], c[(i, i)] + c[(j, j)] - 2.0 * c[(i, j)]))
        }
        (UncertaintyKind::PairwiseGaussEntropy, Distribution::MarginalGaussian(g)) => {
            let s = g.scale();
            Box::new(move |i, j| log_gaussian_win(loc[i] - loc[j], s[i] * s[i] + s[j] * s[j]))
        }
        (UncertaintyKind::PairwiseCauchyEntropy, Distribution::MarginalCauchy(c)) => {
            let s = c.scale();
            Box::new(move |i, j| {
                let (d, g) = (loc[i] - loc[j], s[i] + s[j]);
                Ok(if g > 0.0 { log_std_cauchy_cdf(d / g) } else { log_step(d) })
            })
        }
        _ => {
            return Err(Error::IncompatibleMethod {
                method: match kind {
                    UncertaintyKind::PairwiseCauchyEntropy => "pairwise_cauchy_entropy",
                    _ => "pairwise_gauss_entropy",
                },
                family: output.family(),
            })
        }
    };
    let mut table = vec![0.0; n * n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            table[i * n + j] = pair(i, j)?;
        }
    }
    Ok(table)
}

fn log_gaussian_win(d: f64, var_diff: f64) -> Result<f64> {
    if var_diff < -1e-12 {
        return Err(Error::InvalidCovariance(var_diff));
    }
    Ok(if var_diff > 0.0 { log_std_normal_cdf(d / var_diff.sqrt()) } else { log_step(d) })
}

fn log_step(d: f64) -> f64 {
    if d > 0.0 {
        0.0
    } else if d < 0.0 {
        f64::NEG_INFINITY
    } else {
        -std::f64::consts::LN_2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distprop::{MarginalCauchy, MarginalGaussian};
    use crate::numerics::std_normal_cdf;

    #[test]
    fn uniform_locations_are_least_certain() {
        let n = 4;
        let g: Distribution = MarginalGaussian::isotropic(vec![0.7; n], 1.0).unwrap().into();
        let c: Distribution = MarginalCauchy::isotropic(vec![0.7; n], 1.0).unwrap().into();
        let min = -(n as f64).ln();
        for (d, k) in [
            (&g, UncertaintyKind::SoftmaxEntropy),
            (&g, UncertaintyKind::PairwiseGaussEntropy),
            (&c, UncertaintyKind::PairwiseCauchyEntropy),
        ] {
            assert!((uncertainty_scores(d, k).unwrap() - min).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_class_is_nearly_certain() {
        let g: Distribution = MarginalGaussian::new(vec![50.0, 0.0, 0.0], vec![1e-3; 3]).unwrap().into();
        let s = uncertainty_scores(&g, UncertaintyKind::PairwiseGaussEntropy).unwrap();
        // Weights approach (1, ¼, ¼)/1.5, the most peaked the pairwise rule allows.
        let w = [1.0 / 1.5, 0.25 / 1.5, 0.25 / 1.5];
        let best: f64 = w.iter().map(|p: &f64| p * p.ln()).sum();
        assert!((s - best).abs() < 1e-9);
        let soft = uncertainty_scores(&g, UncertaintyKind::SoftmaxEntropy).unwrap();
        assert!(soft > -1e-18);
    }

    #[test]
    fn three_class_hand_case() {
        let g: Distribution = MarginalGaussian::new(vec![1.0, 0.0, -1.0], vec![1.0, 1.0, 1.0]).unwrap().into();
        let p = |d: f64| std_normal_cdf(d / 2f64.sqrt());
        let w = [
            (p(1.0) + p(2.0)) / 2.0,
            (p(-1.0) + p(1.0)) / 2.0,
            (p(-2.0) + p(-1.0)) / 2.0,
        ];
        let total: f64 = w.iter().sum();
        let expected: f64 = w.iter().map(|v| v / total).map(|q| q * q.ln()).sum();
        let s = uncertainty_scores(&g, UncertaintyKind::PairwiseGaussEntropy).unwrap();
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn pairwise_log_probs_match_the_closed_forms() {
        let g: Distribution = MarginalGaussian::new(vec![0.3, -1.2, 2.0], vec![0.5, 1.5, 0.2]).unwrap().into();
        let c: Distribution = MarginalCauchy::new(vec![0.3, -1.2, 2.0], vec![0.5, 1.5, 0.2]).unwrap().into();
        let lg = pairwise_log_probs(&g, UncertaintyKind::PairwiseGaussEntropy).unwrap();
        let lc = pairwise_log_probs(&c, UncertaintyKind::PairwiseCauchyEntropy).unwrap();
        let (m, s) = ([0.3, -1.2, 2.0], [0.5, 1.5, 0.2]);
        for i in 0..3 {
            for j in (0..3).filter(|&j| j != i) {
                let pg = crate::losses::pairwise_gaussian_prob(m[i], m[j], s[i] * s[i], s[j] * s[j], 0.0).unwrap();
                let pc = crate::losses::pairwise_cauchy_prob(m[i], s[i], m[j], s[j]);
                assert!((lg[i * 3 + j].exp() - pg).abs() < 1e-14);
                assert!((lc[i * 3 + j].exp() - pc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn product_rule_hand_case() {
        let g: Distribution = MarginalGaussian::new(vec![1.0, 0.0, -1.0], vec![1.0, 1.0, 1.0]).unwrap().into();
        let p = |d: f64| std_normal_cdf(d / 2f64.sqrt());
        let w = [p(1.0) * p(2.0), p(-1.0) * p(1.0), p(-2.0) * p(-1.0)];
        let total: f64 = w.iter().sum();
        let expected: f64 = w.iter().map(|v| v / total).map(|q| q * q.ln()).sum();
        let s = uncertainty_scores_with(&g, UncertaintyKind::PairwiseGaussEntropy, PairwiseAggregation::Product).unwrap();
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn product_rule_ignores_how_losers_are_spread() {
        // A clear winner followed by clustered losers, and a clear winner
        // followed by well separated losers: the mean rule calls the second
        // more certain, the product rule rates both as nearly certain.
        let clustered: Distribution = MarginalGaussian::new(vec![30.0, 0.0, 0.0, 0.0], vec![1.0; 4]).unwrap().into();
        let spread: Distribution = MarginalGaussian::new(vec![30.0, 20.0, 10.0, 0.0], vec![1.0; 4]).unwrap().into();
        let k = UncertaintyKind::PairwiseGaussEntropy;
        let mean = |d| uncertainty_scores(d, k).unwrap();
        let prod = |d| uncertainty_scores_with(d, k, PairwiseAggregation::Product).unwrap();
        assert!(mean(&spread) > mean(&clustered));
        assert!(prod(&clustered) > -1e-9 && prod(&spread) > -1e-9);
        // Exact ties keep finite weights.
        let tied: Distribution = MarginalGaussian::new(vec![1.0, 1.0, 0.0], vec![0.0; 3]).unwrap().into();
        assert!((prod(&tied) + std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn family_mismatch() {
        let g: Distribution = MarginalGaussian::isotropic(vec![0.0; 3], 1.0).unwrap().into();
        assert!(uncertainty_scores(&g, UncertaintyKind::PairwiseCauchyEntropy).is_err());
    }
}
