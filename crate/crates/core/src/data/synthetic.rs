use std::f64::consts::PI;

use super::{Dataset, Targets};
use crate::error::Result;
use crate::numerics::{Matrix, SeededRng};

/// Two interleaving half circles with isotropic Gaussian noise; the first
/// `n / 2` rows (rounded up) are class 0.
pub fn two_moons(n: usize, noise: f64, rng: &mut SeededRng) -> Result<Dataset> {
    let n_outer = n.div_ceil(2);
    let n_inner = n - n_outer;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let t = |i: usize, m: usize| if m > 1 { PI * i as f64 / (m - 1) as f64 } else { 0.0 };
    for i in 0..n_outer {
        data.extend([t(i, n_outer).cos(), t(i, n_outer).sin()]);
        labels.push(0);
    }
    for i in 0..n_inner {
        data.extend([1.0 - t(i, n_inner).cos(), 0.5 - t(i, n_inner).sin()]);
        labels.push(1);
    }
    for v in &mut data {
        *v += rng.normal(0.0, noise);
    }
    Dataset::new(Matrix::new(n, 2, data)?, Targets::Class { labels, n_classes: 2 })
}

/// Noise standard deviation of [`heteroscedastic_sine`] at `x`.
pub fn sine_noise_std(x: f64) -> f64 {
    0.05 + 0.25 * (x / 3.0).powi(2)
}

/// `y = sin(x) + ε` with `x ~ U(−3, 3)` and noise growing away from the
/// origin ([`sine_noise_std`]).
pub fn heteroscedastic_sine(n: usize, rng: &mut SeededRng) -> Result<Dataset> {
    let xs: Vec<f64> = (0..n).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    let values = xs.iter().map(|&x| x.sin() + rng.normal(0.0, sine_noise_std(x))).collect();
    Dataset::new(Matrix::new(n, 1, xs)?, Targets::Real { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_shape_and_balance() {
        let d = two_moons(101, 0.0, &mut SeededRng::new(0)).unwrap();
        assert_eq!(d.len(), 101);
        let ones = d.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 50);
        // Noise-free points lie on their circles.
        let r0 = d.x.row(0);
        assert!((r0[0] * r0[0] + r0[1] * r0[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sine_is_seeded() {
        let a = heteroscedastic_sine(50, &mut SeededRng::new(3)).unwrap();
        let b = heteroscedastic_sine(50, &mut SeededRng::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.x.as_slice().iter().all(|v| v.abs() <= 3.0));
    }
}
