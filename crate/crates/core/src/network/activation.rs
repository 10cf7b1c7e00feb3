use serde::{Deserialize, Serialize};

use crate::numerics::{std_normal_cdf, std_normal_pdf};

/// Elementwise nonlinearity.
///
/// Derivatives at the ReLU/LeakyReLU kink take the right-hand slope so that
/// Jacobians agree with the `μ ≥ 0` pass-through branch of the ReLU rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Silu,
    /// Exact `x·Φ(x)`, not the tanh approximation.
    Gelu,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Silu => "silu",
            Activation::Gelu => "gelu",
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x >= 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Silu => x * sigmoid(x),
            Activation::Gelu => x * std_normal_cdf(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Gelu => std_normal_cdf(x) + x * std_normal_pdf(x),
        }
    }

    /// Zero for the piecewise-linear kinds.
    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu | Activation::LeakyRelu { .. } => 0.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))
            }
            Activation::Gelu => std_normal_pdf(x) * (2.0 - x * x),
        }
    }

    pub(crate) fn validate(&self) -> crate::Result<()> {
        if let Activation::LeakyRelu { slope } = *self {
            if !(slope > 0.0 && slope < 1.0) {
                return Err(crate::Error::InvalidParameter(format!(
                    "leaky relu slope {slope} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Activation; 5] = [
        Activation::Relu,
        Activation::LeakyRelu { slope: 0.1 },
        Activation::Sigmoid,
        Activation::Silu,
        Activation::Gelu,
    ];

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in ALL {
            for &x in &[-2.3, -0.7, 0.4, 1.9] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-7, "{act:?} at {x}");
                let fd2 = (act.derivative(x + h) - act.derivative(x - h)) / (2.0 * h);
                assert!((fd2 - act.second_derivative(x)).abs() < 1e-6, "{act:?}'' at {x}");
            }
        }
    }

    #[test]
    fn kink_takes_unit_slope() {
        assert_eq!(Activation::Relu.derivative(0.0), 1.0);
        assert_eq!(Activation::LeakyRelu { slope: 0.2 }.derivative(0.0), 1.0);
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
    }

    #[test]
    fn sigmoid_is_stable_in_the_tails() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(Activation::Sigmoid.derivative(0.0), 0.25);
    }

    #[test]
    fn leaky_slope_validated() {
        assert!(Activation::LeakyRelu { slope: 1.5 }.validate().is_err());
        assert!(Activation::LeakyRelu { slope: 0.0 }.validate().is_err());
        assert!(Activation::LeakyRelu { slope: 0.01 }.validate().is_ok());
    }
}
