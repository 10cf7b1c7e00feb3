//! Error function and standard normal helpers.
//!
//! `erf`/`erfc` come from `libm`, a port of the fdlibm (Sun Microsystems)
//! rational approximations in `s_erf.c`. Those approximations are accurate to
//! below one ulp over the whole real line, well inside the 1e-7 budget the
//! losses need.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Φ(x), evaluated through `erfc` so the lower tail keeps relative accuracy.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// φ(x)
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn cauchy_cdf(x: f64, loc: f64, scale: f64) -> f64 {
    ((x - loc) / scale).atan() / PI + 0.5
}

pub fn cauchy_pdf(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    1.0 / (PI * scale * (1.0 + z * z))
}

/// Below this argument `ln Φ` switches from `erfc` to the Mills-ratio form.
const LOG_CDF_SWITCH: f64 = -5.0;

/// `Φ(-x) / φ(x)` for `x ≥ 5` by its continued fraction.
fn mills_ratio(x: f64) -> f64 {
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    1.0 / tail
}

/// `ln Φ(z)`, finite for every finite `z`.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z > LOG_CDF_SWITCH {
        std_normal_cdf(z).ln()
    } else {
        -0.5 * z * z - 0.5 * (2.0 * PI).ln() + mills_ratio(-z).ln()
    }
}

/// `d/dz ln Φ(z) = φ(z) / Φ(z)`; grows like `-z` in the lower tail.
pub fn log_std_normal_cdf_slope(z: f64) -> f64 {
    if z > LOG_CDF_SWITCH {
        std_normal_pdf(z) / std_normal_cdf(z)
    } else {
        1.0 / mills_ratio(-z)
    }
}

/// `ln(½ + atan(r)/π)`, the log-CDF of the standard Cauchy. The lower tail
/// goes through `atan(-1/r)` to avoid cancellation.
pub fn log_std_cauchy_cdf(r: f64) -> f64 {
    std_cauchy_cdf(r).ln()
}

fn std_cauchy_cdf(r: f64) -> f64 {
    if r < 0.0 {
        (-1.0 / r).atan() / PI
    } else {
        0.5 + r.atan() / PI
    }
}

pub fn log_std_cauchy_cdf_slope(r: f64) -> f64 {
    let p = std_cauchy_cdf(r);
    if r.abs() > 1e100 {
        // 1 + r² overflows; P ~ 1/(π|r|) there.
        return if r < 0.0 { -1.0 / r } else { 0.0 };
    }
    1.0 / (PI * (1.0 + r * r) * p)
}
