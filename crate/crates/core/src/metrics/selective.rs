use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Risk as a function of coverage when keeping the most certain predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCoverageCurve {
    /// `k / N` for `k = 1..=N`.
    pub coverage: Vec<f64>,
    /// Error rate among the `k` kept predictions.
    pub selective_risk: Vec<f64>,
    /// Errors among the `k` kept predictions divided by `N`.
    pub joint_risk: Vec<f64>,
    /// Trapezoid area under `joint_risk` over coverage `[1/N, 1]`.
    pub rcauc: f64,
}

impl RiskCoverageCurve {
    /// Trapezoid area under `selective_risk` over coverage `[1/N, 1]`.
    pub fn selective_auc(&self) -> f64 {
        trapezoid(&self.selective_risk)
    }
}

fn trapezoid(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    values.windows(2).map(|w| 0.5 * (w[0] + w[1]) / n).sum()
}

/// Sorts by descending certainty (stable, so ties keep input order) and
/// accumulates errors.
///
/// With `joint_risk` as the integrand a perfect classifier on a set that is
/// half out-of-distribution (always wrong) scores exactly `1/8` for every even
/// `N`.
pub fn risk_coverage(scores: &[f64], correct: &[bool]) -> Result<RiskCoverageCurve> {
    check_dim(scores.len(), correct.len())?;
    if scores.is_empty() {
        return Err(Error::Empty);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("certainty scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let n = scores.len();
    let mut errors = 0usize;
    let mut coverage = Vec::with_capacity(n);
    let mut selective_risk = Vec::with_capacity(n);
    let mut joint_risk = Vec::with_capacity(n);
    // Twice the trapezoid area in units of 1/N², kept as an integer so that
    // the result is the correctly rounded exact value.
    let mut doubled_area = 0u64;
    for (k, &i) in order.iter().enumerate() {
        let before = errors;
        if !correct[i] {
            errors += 1;
        }
        if k > 0 {
            doubled_area += (before + errors) as u64;
        }
        let kept = (k + 1) as f64;
        coverage.push(kept / n as f64);
        selective_risk.push(errors as f64 / kept);
        joint_risk.push(errors as f64 / n as f64);
    }
    let rcauc = doubled_area as f64 / (2.0 * (n as f64) * (n as f64));
    Ok(RiskCoverageCurve {
        coverage,
        selective_risk,
        joint_risk,
        rcauc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let c = risk_coverage(&[0.3, 0.1, 0.9], &[true; 3]).unwrap();
        assert_eq!(c.rcauc, 0.0);
        assert_eq!(c.coverage, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn four_sample_hand_case() {
        let c = risk_coverage(&[4.0, 3.0, 2.0, 1.0], &[true, true, false, false]).unwrap();
        assert_eq!(c.selective_risk, vec![0.0, 0.0, 1.0 / 3.0, 0.5]);
        assert_eq!(c.joint_risk, vec![0.0, 0.0, 0.25, 0.5]);
        // ¼ · [(0+0)/2 + (0+¼)/2 + (¼+½)/2]
        assert_eq!(c.rcauc, 0.125);
        // ¼ · [(0+0)/2 + (0+⅓)/2 + (⅓+½)/2]
        assert!((c.selective_auc() - 0.25 * (1.0 / 6.0 + 5.0 / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictor_half_ood() {
        for n in [2usize, 10, 1000, 5000] {
            let scores: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
            let correct: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
            let c = risk_coverage(&scores, &correct).unwrap();
            assert_eq!(c.rcauc, 0.125, "{n}");
        }
    }

    #[test]
    fn ties_keep_input_order() {
        let a = risk_coverage(&[1.0, 1.0], &[false, true]).unwrap();
        assert_eq!(a.selective_risk, vec![1.0, 0.5]);
    }

    #[test]
    fn monotone_transform_invariant() {
        let scores = [0.2, -1.0, 3.5, 0.7, 0.1];
        let correct = [true, false, true, false, true];
        let a = risk_coverage(&scores, &correct).unwrap();
        let t: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
        assert_eq!(a, risk_coverage(&t, &correct).unwrap());
        assert!(matches!(risk_coverage(&[], &[]), Err(Error::Empty)));
    }
}
