//! Dense linear algebra, special functions and seeded sampling.

mod linalg;
mod rng;
mod special;

pub use linalg::{dot, psd_factor, Matrix, PsdMatrix};
pub(crate) use linalg::{gemm, scaled_gram};
pub use rng::{derive_seed, SeededRng};
pub use special::{
    cauchy_cdf, cauchy_pdf, erf, erfc, log_std_cauchy_cdf, log_std_cauchy_cdf_slope, log_std_normal_cdf,
    log_std_normal_cdf_slope, std_normal_cdf, std_normal_pdf,
};

use crate::distprop::{Distribution, FullGaussian, MarginalCauchy, MarginalGaussian};
use crate::error::{Error, Result};

/// Draws `n` i.i.d. samples, one per row of the returned matrix.
///
/// Dimensions with zero scale are Dirac masses and always return the location.
pub fn sample(dist: &Distribution, n: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    match dist {
        Distribution::MarginalGaussian(d) => Ok(sample_marginal_gaussian(d, n, rng)),
        Distribution::FullGaussian(d) => sample_full_gaussian(d, n, rng),
        Distribution::MarginalCauchy(d) => Ok(sample_marginal_cauchy(d, n, rng)),
    }
}

fn sample_marginal_gaussian(d: &MarginalGaussian, n: usize, rng: &mut SeededRng) -> Matrix {
    let dim = d.dim();
    let mut out = Matrix::zeros(n, dim);
    for r in 0..n {
        for (j, v) in out.row_mut(r).iter_mut().enumerate() {
            let z = rng.standard_normal();
            *v = if d.scale[j] == 0.0 {
                d.loc[j]
            } else {
                d.loc[j] + d.scale[j] * z
            };
        }
    }
    out
}

fn sample_marginal_cauchy(d: &MarginalCauchy, n: usize, rng: &mut SeededRng) -> Matrix {
    let dim = d.dim();
    let mut out = Matrix::zeros(n, dim);
    for r in 0..n {
        for (j, v) in out.row_mut(r).iter_mut().enumerate() {
            let x = rng.cauchy(0.0, 1.0);
            *v = if d.scale[j] == 0.0 {
                d.loc[j]
            } else {
                d.loc[j] + d.scale[j] * x
            };
        }
    }
    out
}

fn sample_full_gaussian(d: &FullGaussian, n: usize, rng: &mut SeededRng) -> Result<Matrix> {
    let dim = d.dim();
    let cov = d.cov.matrix();
    // Zero-variance coordinates are exact in PSD matrices (their rows vanish),
    // so only the remaining block is factored.
    let active: Vec<usize> = (0..dim).filter(|&i| cov[(i, i)] > 0.0).collect();
    let k = active.len();
    let mut sub = Matrix::zeros(k, k);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            sub[(a, b)] = cov[(i, j)];
        }
    }
    let l = psd_factor(&PsdMatrix::from_gram(sub))?;
    let mut out = Matrix::zeros(n, dim);
    let mut z = vec![0.0; k];
    for r in 0..n {
        for v in z.iter_mut() {
            *v = rng.standard_normal();
        }
        let row = out.row_mut(r);
        row.copy_from_slice(&d.mean);
        for (a, &i) in active.iter().enumerate() {
            row[i] += dot(&l.row(a)[..=a], &z[..=a]);
        }
    }
    Ok(out)
}
