use serde::{Deserialize, Serialize};

use super::families::{affine_loc, MarginalCauchy, MarginalGaussian, Propagate};
use crate::error::{check_dim, Error, Result};
use crate::network::{group_argmax, Activation};
use crate::numerics::Matrix;

/// Independent α-stable coordinates `S(x₀, γ, α, β)`.
///
/// `α = 2` is the Gaussian family with `γ` playing the role of `σ`, `α = 1`
/// with `β = 0` is the Cauchy family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StableRepr")]
pub struct MarginalStable {
    loc: Vec<f64>,
    scale: Vec<f64>,
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
struct StableRepr {
    loc: Vec<f64>,
    scale: Vec<f64>,
    alpha: f64,
    beta: f64,
}

impl TryFrom<StableRepr> for MarginalStable {
    type Error = Error;
    fn try_from(r: StableRepr) -> Result<Self> {
        MarginalStable::new(r.loc, r.scale, r.alpha, r.beta)
    }
}

/// How [`MarginalStable::push_affine_stable`] treats negative weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StableMode {
    /// Rejects negative weights unless the distribution is symmetric.
    Exact,
    /// Accepts any weights; the scale is then a bound on the true spread.
    UpperBound,
}

impl MarginalStable {
    pub fn new(loc: Vec<f64>, scale: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        // Validates lengths, finiteness and sign of the scale.
        MarginalGaussian::new(loc.clone(), scale.clone())?;
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 2]")));
        }
        if !(-1.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta {beta} outside [-1, 1]")));
        }
        Ok(MarginalStable {
            loc,
            scale,
            alpha,
            beta,
        })
    }

    pub fn loc(&self) -> &[f64] {
        &self.loc
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    /// `x₀ ↦ W x₀ + b`, `γ_i ↦ (Σ_j |W_ij|^α γ_j^α)^{1/α}`.
    ///
    /// The scale rule is exact for nonnegative weights and for symmetric
    /// (`β = 0`) distributions. With mixed signs and `β ≠ 0` the output is not
    /// stable any more; `UpperBound` still returns the same scale, which then
    /// over-covers.
    pub fn push_affine_stable(&self, weights: &Matrix, bias: &[f64], mode: StableMode) -> Result<Self> {
        check_dim(self.dim(), weights.cols())?;
        if mode == StableMode::Exact && self.beta != 0.0 && weights.as_slice().iter().any(|&w| w < 0.0) {
            return Err(Error::NegativeWeight);
        }
        let loc = affine_loc(weights, bias, &self.loc)?;
        let a = self.alpha;
        let pow: Vec<f64> = self.scale.iter().map(|g| g.powf(a)).collect();
        let scale = weights
            .map(|w| w.abs().powf(a))
            .matvec(&pow)?
            .into_iter()
            .map(|s| s.powf(1.0 / a))
            .collect();
        Ok(MarginalStable {
            loc,
            scale,
            alpha: self.alpha,
            beta: self.beta,
        })
    }
}

impl From<&MarginalGaussian> for MarginalStable {
    fn from(g: &MarginalGaussian) -> Self {
        MarginalStable {
            loc: g.loc().to_vec(),
            scale: g.scale().to_vec(),
            alpha: 2.0,
            beta: 0.0,
        }
    }
}

impl From<&MarginalCauchy> for MarginalStable {
    fn from(c: &MarginalCauchy) -> Self {
        MarginalStable {
            loc: c.loc().to_vec(),
            scale: c.scale().to_vec(),
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

/// Affine layers use [`StableMode::Exact`]. Activations treat `loc` as the
/// median, which coincides with the location only when `β = 0`.
impl Propagate for MarginalStable {
    fn push_affine(&self, weights: &Matrix, bias: &[f64]) -> Result<Self> {
        self.push_affine_stable(weights, bias, StableMode::Exact)
    }

    fn push_activation(&self, activation: Activation) -> Self {
        let (loc, scale) = self
            .loc
            .iter()
            .zip(&self.scale)
            .map(|(&m, &s)| {
                let slope = activation.derivative(m).abs();
                (activation.apply(m), if slope == 0.0 { 0.0 } else { slope * s })
            })
            .unzip();
        MarginalStable {
            loc,
            scale,
            ..*self
        }
    }

    fn push_maxpool(&self, group_size: usize) -> Result<Self> {
        if group_size == 0 || self.dim() % group_size != 0 {
            return Err(Error::InvalidParameter(format!(
                "width {} not divisible by group size {group_size}",
                self.dim()
            )));
        }
        let idx = group_argmax(&self.loc, group_size);
        Ok(MarginalStable {
            loc: idx.iter().map(|&i| self.loc[i]).collect(),
            scale: idx.iter().map(|&i| self.scale[i]).collect(),
            ..*self
        })
    }

    fn width(&self) -> usize {
        self.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable(scale: Vec<f64>, alpha: f64, beta: f64) -> MarginalStable {
        MarginalStable::new(vec![0.0; scale.len()], scale, alpha, beta).unwrap()
    }

    #[test]
    fn alpha_two_sums_variances() {
        let w = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let out = stable(vec![1.0, 1.0], 2.0, 0.0)
            .push_affine_stable(&w, &[0.0], StableMode::Exact)
            .unwrap();
        assert!((out.scale[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn alpha_one_sums_scales() {
        let w = Matrix::from_rows(&[[2.0, 3.0]]).unwrap();
        let out = stable(vec![1.0, 1.0], 1.0, 0.0)
            .push_affine_stable(&w, &[0.0], StableMode::Exact)
            .unwrap();
        assert_eq!(out.scale, vec![5.0]);
    }

    #[test]
    fn general_alpha() {
        let w = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let out = stable(vec![1.0, 1.0], 1.5, 0.3)
            .push_affine_stable(&w, &[0.0], StableMode::Exact)
            .unwrap();
        assert!((out.scale[0] - 2f64.powf(2.0 / 3.0)).abs() < 1e-14);
        assert_eq!((out.alpha, out.beta), (1.5, 0.3));
    }

    #[test]
    fn negative_weights_need_symmetry_or_bound_mode() {
        let w = Matrix::from_rows(&[[1.0, -1.0]]).unwrap();
        let skewed = stable(vec![1.0, 1.0], 1.5, 0.5);
        assert!(matches!(
            skewed.push_affine_stable(&w, &[0.0], StableMode::Exact),
            Err(Error::NegativeWeight)
        ));
        assert!(skewed.push_affine_stable(&w, &[0.0], StableMode::UpperBound).is_ok());
        assert!(stable(vec![1.0, 1.0], 1.5, 0.0)
            .push_affine_stable(&w, &[0.0], StableMode::Exact)
            .is_ok());
    }

    #[test]
    fn parameters_validated() {
        assert!(MarginalStable::new(vec![0.0], vec![1.0], 0.0, 0.0).is_err());
        assert!(MarginalStable::new(vec![0.0], vec![1.0], 2.5, 0.0).is_err());
        assert!(MarginalStable::new(vec![0.0], vec![1.0], 1.0, 1.5).is_err());
        assert!(MarginalStable::new(vec![0.0], vec![-1.0], 1.0, 0.0).is_err());
    }
}
