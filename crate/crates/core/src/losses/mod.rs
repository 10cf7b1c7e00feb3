//! Training objectives.
//!
//! Scalar versions here evaluate a single prediction; [`tape`] builds the same
//! losses on a [`GradTape`](crate::network::GradTape) for batched training.

pub mod tape;

use std::f64::consts::{FRAC_1_PI, PI};

use serde::{Deserialize, Serialize};

use crate::distprop::{Distribution, FullGaussian, MarginalCauchy};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{erf, psd_factor};

/// Probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` before taking
/// logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Index of the true class among `n_classes ≥ 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTarget {
    label: usize,
    n_classes: usize,
}

impl ClassTarget {
    pub fn new(label: usize, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if label >= n_classes {
            return Err(Error::InvalidParameter(format!(
                "label {label} out of range for {n_classes} classes"
            )));
        }
        Ok(ClassTarget { label, n_classes })
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
}

/// `P(X > Y)` for a bivariate Gaussian, given the means, the two variances
/// and the covariance.
///
/// A degenerate difference `X − Y` (zero variance) gives a step in
/// `μX − μY` with value ½ at equality.
pub fn pairwise_gaussian_prob(mu_x: f64, mu_y: f64, var_x: f64, var_y: f64, cov_xy: f64) -> Result<f64> {
    let var_diff = var_x + var_y - 2.0 * cov_xy;
    if var_diff < -1e-12 {
        return Err(Error::InvalidCovariance(var_diff));
    }
    let d = mu_x - mu_y;
    if var_diff <= 0.0 {
        return Ok(step(d));
    }
    Ok(0.5 * (1.0 + erf(d / (2.0 * var_diff).sqrt())))
}

/// `P(X > Y)` for independent Cauchy variables.
pub fn pairwise_cauchy_prob(x_x: f64, gamma_x: f64, x_y: f64, gamma_y: f64) -> f64 {
    let d = x_x - x_y;
    let g = gamma_x + gamma_y;
    if g <= 0.0 {
        return step(d);
    }
    FRAC_1_PI * (d / g).atan() + 0.5
}

fn step(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// `P(X_label > X_j)` for every `j ≠ label`, in class order.
pub fn pairwise_win_probs(output: &Distribution, target: ClassTarget) -> Result<Vec<f64>> {
    check_dim(target.n_classes, output.dim())?;
    let l = target.label;
    let loc = output.location();
    let others = (0..target.n_classes).filter(|&j| j != l);
    match output {
        Distribution::MarginalGaussian(g) => {
            let s = g.scale();
            others
                .map(|j| pairwise_gaussian_prob(loc[l], loc[j], s[l] * s[l], s[j] * s[j], 0.0))
                .collect()
        }
        Distribution::FullGaussian(g) => {
            let c = g.cov().matrix();
            others
                .map(|j| pairwise_gaussian_prob(loc[l], loc[j], c[(l, l)], c[(j, j)], c[(l, j)]))
                .collect()
        }
        Distribution::MarginalCauchy(c) => {
            let s = c.scale();
            Ok(others.map(|j| pairwise_cauchy_prob(loc[l], s[l], loc[j], s[j])).collect())
        }
    }
}

/// Mean over false classes of `−log P(X_label > X_j)`.
pub fn pairwise_distribution_loss(output: &Distribution, target: ClassTarget) -> Result<f64> {
    let probs = pairwise_win_probs(output, target)?;
    let n = probs.len() as f64;
    Ok(probs
        .into_iter()
        .map(|p| -p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln())
        .sum::<f64>()
        / n)
}

/// Negative log-density of `y` under a Gaussian prediction.
pub fn gaussian_nll(pred: &Distribution, y: &[f64]) -> Result<f64> {
    match pred {
        Distribution::MarginalGaussian(g) => {
            check_dim(g.dim(), y.len())?;
            let mut nll = 0.0;
            for ((&m, &s), &t) in g.loc().iter().zip(g.scale()).zip(y) {
                if s <= 0.0 {
                    return Err(Error::NonpositiveScale(s));
                }
                let z = (t - m) / s;
                nll += 0.5 * (2.0 * PI).ln() + s.ln() + 0.5 * z * z;
            }
            Ok(nll)
        }
        Distribution::FullGaussian(g) => full_gaussian_nll(g, y),
        Distribution::MarginalCauchy(_) => Err(Error::IncompatibleMethod {
            method: "gaussian_nll",
            family: pred.family(),
        }),
    }
}

fn full_gaussian_nll(g: &FullGaussian, y: &[f64]) -> Result<f64> {
    check_dim(g.dim(), y.len())?;
    let l = psd_factor(g.cov())?;
    let n = g.dim();
    // Solve L z = y − μ by forward substitution.
    let mut z = vec![0.0; n];
    let mut log_det_half = 0.0;
    for i in 0..n {
        let lii = l[(i, i)];
        if lii <= 0.0 {
            return Err(Error::NotPsd);
        }
        let mut acc = y[i] - g.mean()[i];
        for j in 0..i {
            acc -= l[(i, j)] * z[j];
        }
        z[i] = acc / lii;
        log_det_half += lii.ln();
    }
    let quad: f64 = z.iter().map(|v| v * v).sum();
    Ok(0.5 * n as f64 * (2.0 * PI).ln() + log_det_half + 0.5 * quad)
}

/// `Σ_i log(π γ_i) + log(1 + ((y_i − x₀ᵢ)/γ_i)²)`.
pub fn cauchy_nll(pred: &MarginalCauchy, y: &[f64]) -> Result<f64> {
    check_dim(pred.dim(), y.len())?;
    let mut nll = 0.0;
    for ((&x0, &g), &t) in pred.loc().iter().zip(pred.scale()).zip(y) {
        if g <= 0.0 {
            return Err(Error::NonpositiveScale(g));
        }
        let z = (t - x0) / g;
        nll += (PI * g).ln() + z.mul_add(z, 1.0).ln();
    }
    Ok(nll)
}

/// Softmax cross-entropy, stabilized by subtracting the max logit.
pub fn softmax_ce(logits: &[f64], target: ClassTarget) -> Result<f64> {
    check_dim(target.n_classes, logits.len())?;
    Ok(log_sum_exp(logits) - logits[target.label])
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::INFINITY {
        return mx;
    }
    mx + xs.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Softmax probabilities.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|v| (v - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;
    use crate::distprop::MarginalGaussian;
    use crate::numerics::{std_normal_cdf, Matrix, PsdMatrix, SeededRng};

    #[test]
    fn gaussian_prob_examples() {
        assert_eq!(pairwise_gaussian_prob(1.3, 1.3, 0.7, 0.2, 0.1).unwrap(), 0.5);
        let p = pairwise_gaussian_prob(1.0, 0.0, 0.5, 0.5, 0.0).unwrap();
        assert!((p - std_normal_cdf(1.0)).abs() < 1e-15);
        assert!((p - 0.841345).abs() < 1e-6);
        assert_eq!(pairwise_gaussian_prob(2.0, 1.0, 0.4, 0.4, 0.4).unwrap(), 1.0);
        assert_eq!(pairwise_gaussian_prob(1.0, 1.0, 0.4, 0.4, 0.4).unwrap(), 0.5);
        assert!(matches!(
            pairwise_gaussian_prob(0.0, 0.0, 0.1, 0.1, 1.0),
            Err(Error::InvalidCovariance(_))
        ));
    }

    #[test]
    fn cauchy_prob_examples() {
        assert_eq!(pairwise_cauchy_prob(0.4, 1.0, 0.4, 3.0), 0.5);
        assert!((pairwise_cauchy_prob(3.0, 1.0, 1.0, 1.0) - 0.75).abs() < 1e-15);
        assert_eq!(pairwise_cauchy_prob(1.0, 0.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn pairwise_identities() {
        let mut rng = SeededRng::new(5);
        for _ in 0..200 {
            let (a, b) = (rng.normal(0.0, 3.0), rng.normal(0.0, 3.0));
            let (vx, vy) = (rng.uniform() * 2.0 + 0.01, rng.uniform() * 2.0 + 0.01);
            let c = (rng.uniform() - 0.5) * (vx * vy).sqrt();
            let pxy = pairwise_gaussian_prob(a, b, vx, vy, c).unwrap();
            let pyx = pairwise_gaussian_prob(b, a, vy, vx, c).unwrap();
            assert!((pxy + pyx - 1.0).abs() < 1e-12);
            let shifted = pairwise_gaussian_prob(a + 7.5, b + 7.5, vx, vy, c).unwrap();
            assert!((pxy - shifted).abs() < 1e-12);
            let lam: f64 = 3.7;
            let scaled = pairwise_gaussian_prob(lam * a, lam * b, lam * lam * vx, lam * lam * vy, lam * lam * c).unwrap();
            assert!((pxy - scaled).abs() < 1e-12);

            let qxy = pairwise_cauchy_prob(a, vx, b, vy);
            assert!((qxy + pairwise_cauchy_prob(b, vy, a, vx) - 1.0).abs() < 1e-12);
            assert!((qxy - pairwise_cauchy_prob(a - 2.0, vx, b - 2.0, vy)).abs() < 1e-12);
            assert!((qxy - pairwise_cauchy_prob(lam * a, lam * vx, lam * b, lam * vy)).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_in_location_gap() {
        let mut prev_g = 0.0;
        let mut prev_c = 0.0;
        for k in -20..=20 {
            let d = k as f64 * 0.25;
            let g = pairwise_gaussian_prob(d, 0.0, 1.0, 1.0, 0.3).unwrap();
            let c = pairwise_cauchy_prob(d, 1.0, 0.0, 0.5);
            assert!(g > prev_g && c > prev_c);
            prev_g = g;
            prev_c = c;
        }
    }

    #[test]
    fn pairwise_loss_values() {
        let sym: Distribution = MarginalGaussian::new(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap().into();
        let t = ClassTarget::new(0, 2).unwrap();
        assert!((pairwise_distribution_loss(&sym, t).unwrap() - LN_2).abs() < 1e-15);

        let mut last = f64::INFINITY;
        for gap in [0.0, 1.0, 4.0, 16.0] {
            let d: Distribution = MarginalCauchy::new(vec![gap, 0.0], vec![1.0, 1.0]).unwrap().into();
            let loss = pairwise_distribution_loss(&d, t).unwrap();
            assert!(loss < last);
            last = loss;
        }

        let cov = PsdMatrix::new(
            Matrix::from_rows(&[[1.0, 0.3, -0.2], [0.3, 2.0, 0.1], [-0.2, 0.1, 0.5]]).unwrap(),
        )
        .unwrap();
        let full: Distribution = FullGaussian::new(vec![0.2, 1.0, -0.5], cov).unwrap().into();
        let t = ClassTarget::new(1, 3).unwrap();
        // Hand-expanded: P(X1 > X0) = Φ(0.8/√(2+1−0.6)), P(X1 > X2) = Φ(1.5/√(2+0.5−0.2)).
        let p0 = std_normal_cdf(0.8 / 2.4f64.sqrt());
        let p2 = std_normal_cdf(1.5 / 2.3f64.sqrt());
        let expected = -(p0.ln() + p2.ln()) / 2.0;
        assert!((pairwise_distribution_loss(&full, t).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gaussian_nll_values() {
        let g: Distribution = MarginalGaussian::new(vec![1.0, 2.0, 3.0], vec![1.0; 3]).unwrap().into();
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        assert!((gaussian_nll(&g, &[1.0, 2.0, 3.0]).unwrap() - 3.0 * half_log_2pi).abs() < 1e-14);
        let g1: Distribution = MarginalGaussian::new(vec![0.0], vec![1.0]).unwrap().into();
        assert!((gaussian_nll(&g1, &[1.0]).unwrap() - half_log_2pi - 0.5).abs() < 1e-15);
    }

    #[test]
    fn full_gaussian_nll_matches_density() {
        let mut rng = SeededRng::new(17);
        for n in 1..5 {
            let a = Matrix::new(n, n, (0..n * n).map(|_| rng.standard_normal()).collect()).unwrap();
            let mut cov = a.matmul_t(&a).unwrap();
            for i in 0..n {
                cov[(i, i)] += 0.1;
            }
            let mean: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let inv = cov.to_nalgebra().try_inverse().unwrap();
            let det = cov.to_nalgebra().determinant();
            let r = nalgebra::DVector::from_iterator(n, y.iter().zip(&mean).map(|(a, b)| a - b));
            let quad = (r.transpose() * &inv * &r)[(0, 0)];
            let density = (-0.5 * quad).exp() / ((2.0 * PI).powi(n as i32) * det).sqrt();
            let pred: Distribution = FullGaussian::new(mean, PsdMatrix::new(cov).unwrap()).unwrap().into();
            assert!((gaussian_nll(&pred, &y).unwrap() + density.ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn cauchy_nll_values() {
        let c = MarginalCauchy::new(vec![0.5, -1.0], vec![1.0, 1.0]).unwrap();
        assert!((cauchy_nll(&c, &[0.5, -1.0]).unwrap() - 2.0 * PI.ln()).abs() < 1e-14);
        let c1 = MarginalCauchy::new(vec![0.0], vec![2.5]).unwrap();
        assert!((cauchy_nll(&c1, &[2.5]).unwrap() - (PI * 2.5).ln() - LN_2).abs() < 1e-14);
        let mut rng = SeededRng::new(8);
        for _ in 0..20 {
            let (x0, g, y) = (rng.normal(0.0, 2.0), rng.uniform() + 0.05, rng.normal(0.0, 3.0));
            let c = MarginalCauchy::new(vec![x0], vec![g]).unwrap();
            let pdf = crate::numerics::cauchy_pdf(y, x0, g);
            assert!((cauchy_nll(&c, &[y]).unwrap() + pdf.ln()).abs() < 1e-10);
        }
        let zero = MarginalCauchy::new(vec![0.0], vec![0.0]).unwrap();
        assert!(matches!(cauchy_nll(&zero, &[0.0]), Err(Error::NonpositiveScale(_))));
    }

    #[test]
    fn softmax_ce_values() {
        let t = ClassTarget::new(2, 4).unwrap();
        assert!((softmax_ce(&[0.3; 4], t).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(softmax_ce(&[0.0, 0.0, 800.0, 0.0], t).unwrap().abs() < 1e-300);
        let logits: [f64; 4] = [1.2, -0.4, 2.2, 0.1];
        let brute = -(logits[2].exp() / logits.iter().map(|v: &f64| v.exp()).sum::<f64>()).ln();
        assert!((softmax_ce(&logits, t).unwrap() - brute).abs() < 1e-10);
        assert!(ClassTarget::new(1, 1).is_err());
        assert!(ClassTarget::new(3, 3).is_err());
    }
}
