use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::std_normal_cdf;

/// Half-width multiplier of the conventional 95% interval, `μ ± 1.96σ`.
pub const Z95: f64 = 1.96;

/// Coverage and normalized width of a set of prediction intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalScore {
    pub picp: f64,
    pub mpiw: f64,
}

/// Two-sided standard normal quantile: the `z` with `P(|Z| ≤ z) = level`.
/// Returns [`Z95`] for `level = 0.95`.
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("interval level {level} outside (0, 1)")));
    }
    if level == 0.95 {
        return Ok(Z95);
    }
    let target = 0.5 + 0.5 * level;
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if std_normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// PICP and MPIW of the intervals `μ ± z(level)·σ`; widths are divided by
/// `y_range`.
pub fn picp_mpiw(mu: &[f64], sigma: &[f64], targets: &[f64], level: f64, y_range: f64) -> Result<IntervalScore> {
    check_dim(mu.len(), sigma.len())?;
    check_dim(mu.len(), targets.len())?;
    if mu.is_empty() {
        return Err(Error::Empty);
    }
    if !(y_range > 0.0) {
        return Err(Error::InvalidParameter(format!("y_range {y_range} must be positive")));
    }
    if let Some(&s) = sigma.iter().find(|&&s| s < 0.0) {
        return Err(Error::NonpositiveScale(s));
    }
    let z = z_for_level(level)?;
    let n = mu.len() as f64;
    let inside = mu
        .iter()
        .zip(sigma)
        .zip(targets)
        .filter(|((&m, &s), &t)| (t - m).abs() <= z * s)
        .count();
    let width: f64 = sigma.iter().map(|s| 2.0 * z * s).sum();
    Ok(IntervalScore {
        picp: inside as f64 / n,
        mpiw: width / n / y_range,
    })
}
