//! Moment matching: replace the output of a nonlinearity by the Gaussian with
//! the same first two moments.

use crate::network::sigmoid;
use crate::numerics::{std_normal_cdf, std_normal_pdf};

/// Mean and standard deviation of `max(0, X)` for `X ~ N(μ, σ²)`.
pub fn moment_match_relu(mu: f64, sigma: f64) -> (f64, f64) {
    if sigma == 0.0 {
        return (mu.max(0.0), 0.0);
    }
    let z = mu / sigma;
    let cdf = std_normal_cdf(z);
    let pdf = std_normal_pdf(z);
    let mean = mu * cdf + sigma * pdf;
    let second = (mu * mu + sigma * sigma) * cdf + mu * sigma * pdf;
    (mean, (second - mean * mean).max(0.0).sqrt())
}

const HALF_WIDTH: f64 = 10.0;
const PANELS: usize = 400;

/// `(E[f(X)], E[f(X)²])` for `X ~ N(μ, σ²)` by composite Simpson over ±10σ.
pub(crate) fn gaussian_moments(f: impl Fn(f64) -> f64, mu: f64, sigma: f64) -> (f64, f64) {
    if sigma == 0.0 {
        let v = f(mu);
        return (v, v * v);
    }
    let h = 2.0 * HALF_WIDTH / PANELS as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in 0..=PANELS {
        let z = -HALF_WIDTH + k as f64 * h;
        let w = if k == 0 || k == PANELS {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = f(mu + sigma * z);
        let p = w * std_normal_pdf(z);
        m1 += p * v;
        m2 += p * v * v;
    }
    (m1 * h / 3.0, m2 * h / 3.0)
}

/// Moment-matched logistic sigmoid.
pub fn moment_match_sigmoid(mu: f64, sigma: f64) -> (f64, f64) {
    let (m1, m2) = gaussian_moments(sigmoid, mu, sigma);
    (m1, (m2 - m1 * m1).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_at_zero_mean() {
        // E[max(0,X)] = σ/√(2π), E[max(0,X)²] = σ²/2.
        let (m, s) = moment_match_relu(0.0, 2.0);
        let pdf0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((m - 2.0 * pdf0).abs() < 1e-15);
        assert!((s * s - (2.0 - 4.0 * pdf0 * pdf0)).abs() < 1e-14);
    }

    #[test]
    fn relu_far_from_the_kink() {
        let (m, s) = moment_match_relu(-10.0, 0.1);
        assert!(m.abs() <= 1e-12 && s <= 1e-12);
        let (m, s) = moment_match_relu(10.0, 0.1);
        assert!((m - 10.0).abs() < 1e-12 && (s - 0.1).abs() < 1e-10);
        assert_eq!(moment_match_relu(-1.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn quadrature_on_smooth_integrands() {
        for &(mu, sigma) in &[(0.3, 1.2), (-0.8, 0.5), (2.0, 0.7)] {
            let (m1, m2) = gaussian_moments(|x| x, mu, sigma);
            assert!((m1 - mu).abs() < 1e-12);
            assert!((m2 - mu * mu - sigma * sigma).abs() < 1e-12);
            // Lognormal moments: E[e^X] = e^{μ+σ²/2}, E[e^{2X}] = e^{2μ+2σ²}.
            let (e1, e2) = gaussian_moments(f64::exp, mu, sigma);
            assert!((e1 / (mu + sigma * sigma / 2.0).exp() - 1.0).abs() < 1e-10);
            assert!((e2 / (2.0 * mu + 2.0 * sigma * sigma).exp() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sigmoid_symmetry() {
        let (m, s) = moment_match_sigmoid(0.0, 1.5);
        assert!((m - 0.5).abs() < 1e-12);
        assert!(s > 0.0 && s < 0.25 * 1.5);
    }
}
