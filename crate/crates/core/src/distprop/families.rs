use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::network::{group_argmax, Activation, Layer, Network};
use crate::numerics::{Matrix, PsdMatrix};

fn check_params(loc: &[f64], scale: &[f64], what: &'static str) -> Result<()> {
    check_dim(loc.len(), scale.len())?;
    if loc.iter().chain(scale).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    if let Some(&s) = scale.iter().find(|&&s| s < 0.0) {
        return Err(Error::InvalidParameter(format!("{what} scale {s} is negative")));
    }
    Ok(())
}

/// `W x + b`, shared with `Network::forward` so propagated locations match
/// plain evaluation bit for bit.
pub(crate) fn affine_loc(weights: &Matrix, bias: &[f64], loc: &[f64]) -> Result<Vec<f64>> {
    check_dim(weights.rows(), bias.len())?;
    let mut y = weights.matvec(loc)?;
    for (v, b) in y.iter_mut().zip(bias) {
        *v += b;
    }
    Ok(y)
}

/// Independent Gaussians per coordinate: `N(μ, diag(σ²))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LocScale")]
pub struct MarginalGaussian {
    pub(crate) loc: Vec<f64>,
    pub(crate) scale: Vec<f64>,
}

/// Independent Cauchy coordinates `C(x₀, γ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LocScale")]
pub struct MarginalCauchy {
    pub(crate) loc: Vec<f64>,
    pub(crate) scale: Vec<f64>,
}

#[derive(Deserialize)]
struct LocScale {
    loc: Vec<f64>,
    scale: Vec<f64>,
}

impl TryFrom<LocScale> for MarginalGaussian {
    type Error = Error;
    fn try_from(v: LocScale) -> Result<Self> {
        MarginalGaussian::new(v.loc, v.scale)
    }
}

impl TryFrom<LocScale> for MarginalCauchy {
    type Error = Error;
    fn try_from(v: LocScale) -> Result<Self> {
        MarginalCauchy::new(v.loc, v.scale)
    }
}

macro_rules! loc_scale_accessors {
    ($t:ty, $what:literal) => {
        impl $t {
            pub fn new(loc: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
                check_params(&loc, &scale, $what)?;
                Ok(Self { loc, scale })
            }

            /// Same scale in every coordinate.
            pub fn isotropic(loc: Vec<f64>, scale: f64) -> Result<Self> {
                let n = loc.len();
                Self::new(loc, vec![scale; n])
            }

            pub fn loc(&self) -> &[f64] {
                &self.loc
            }

            pub fn scale(&self) -> &[f64] {
                &self.scale
            }

            pub fn dim(&self) -> usize {
                self.loc.len()
            }

            pub fn is_dirac(&self) -> bool {
                self.scale.iter().all(|&s| s == 0.0)
            }
        }
    };
}

loc_scale_accessors!(MarginalGaussian, "gaussian");
loc_scale_accessors!(MarginalCauchy, "cauchy");

impl MarginalGaussian {
    pub fn variances(&self) -> Vec<f64> {
        self.scale.iter().map(|s| s * s).collect()
    }
}

/// `N(μ, Σ)` with a PSD covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeanCov")]
pub struct FullGaussian {
    pub(crate) mean: Vec<f64>,
    pub(crate) cov: PsdMatrix,
}

#[derive(Deserialize)]
struct MeanCov {
    mean: Vec<f64>,
    cov: PsdMatrix,
}

impl TryFrom<MeanCov> for FullGaussian {
    type Error = Error;
    fn try_from(v: MeanCov) -> Result<Self> {
        FullGaussian::new(v.mean, v.cov)
    }
}

impl FullGaussian {
    pub fn new(mean: Vec<f64>, cov: PsdMatrix) -> Result<Self> {
        check_dim(mean.len(), cov.dim())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean"));
        }
        Ok(FullGaussian { mean, cov })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &PsdMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_devs(&self) -> Vec<f64> {
        self.cov.variances().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// Drops correlations.
    pub fn marginal(&self) -> MarginalGaussian {
        MarginalGaussian {
            loc: self.mean.clone(),
            scale: self.std_devs(),
        }
    }
}

impl From<&MarginalGaussian> for FullGaussian {
    fn from(m: &MarginalGaussian) -> Self {
        FullGaussian {
            mean: m.loc.clone(),
            cov: PsdMatrix::from_diagonal(&m.variances()).expect("scales are validated"),
        }
    }
}

/// Layer-by-layer pushforward rules.
///
/// Affine layers are exact (Gaussian and Cauchy are closed under affine maps);
/// activations use the local linearization `(μ, σ) ↦ (f(μ), |f′(μ)|·σ)`, which
/// for ReLU keeps `(μ, σ)` when `μ ≥ 0` and collapses to the Dirac `(0, 0)`
/// otherwise.
pub trait Propagate: Sized + Clone {
    /// Pushes through `x ↦ W x + b`.
    fn push_affine(&self, weights: &Matrix, bias: &[f64]) -> Result<Self>;

    fn push_activation(&self, activation: Activation) -> Self;

    /// Max over consecutive groups; keeps the scale of the winning location.
    fn push_maxpool(&self, group_size: usize) -> Result<Self>;

    fn push_layer(&self, layer: &Layer) -> Result<Self> {
        match layer {
            Layer::Dense(d) => self.push_affine(&d.weights, &d.bias),
            Layer::Activation(a) => Ok(self.push_activation(*a)),
            Layer::MaxPool { group_size } => self.push_maxpool(*group_size),
        }
    }

    fn push_network(&self, net: &Network) -> Result<Self> {
        check_dim(net.input_dim(), self.width())?;
        let mut d = self.clone();
        for layer in net.layers() {
            d = d.push_layer(layer)?;
        }
        Ok(d)
    }

    /// Number of coordinates.
    fn width(&self) -> usize;
}

fn check_group(width: usize, group_size: usize) -> Result<()> {
    if group_size == 0 || width % group_size != 0 {
        return Err(Error::DimMismatch {
            expected: group_size.max(1) * (width / group_size.max(1)).max(1),
            got: width,
        });
    }
    Ok(())
}

fn maxpool_loc_scale(loc: &[f64], scale: &[f64], group_size: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_group(loc.len(), group_size)?;
    let idx = group_argmax(loc, group_size);
    Ok((
        idx.iter().map(|&i| loc[i]).collect(),
        idx.iter().map(|&i| scale[i]).collect(),
    ))
}

/// Linearized activation on a location/scale pair.
fn linearize(activation: Activation, loc: &[f64], scale: &[f64]) -> (Vec<f64>, Vec<f64>) {
    loc.iter()
        .zip(scale)
        .map(|(&m, &s)| {
            let slope = activation.derivative(m).abs();
            (activation.apply(m), if slope == 0.0 { 0.0 } else { slope * s })
        })
        .unzip()
}

impl Propagate for MarginalGaussian {
    fn push_affine(&self, weights: &Matrix, bias: &[f64]) -> Result<Self> {
        let loc = affine_loc(weights, bias, &self.loc)?;
        let var = weights.map(|w| w * w).matvec(&self.variances())?;
        Ok(MarginalGaussian {
            loc,
            scale: var.into_iter().map(f64::sqrt).collect(),
        })
    }

    fn push_activation(&self, activation: Activation) -> Self {
        let (loc, scale) = linearize(activation, &self.loc, &self.scale);
        MarginalGaussian { loc, scale }
    }

    fn push_maxpool(&self, group_size: usize) -> Result<Self> {
        let (loc, scale) = maxpool_loc_scale(&self.loc, &self.scale, group_size)?;
        Ok(MarginalGaussian { loc, scale })
    }

    fn width(&self) -> usize {
        self.dim()
    }
}

impl Propagate for MarginalCauchy {
    fn push_affine(&self, weights: &Matrix, bias: &[f64]) -> Result<Self> {
        let loc = affine_loc(weights, bias, &self.loc)?;
        let scale = weights.map(f64::abs).matvec(&self.scale)?;
        Ok(MarginalCauchy { loc, scale })
    }

    fn push_activation(&self, activation: Activation) -> Self {
        let (loc, scale) = linearize(activation, &self.loc, &self.scale);
        MarginalCauchy { loc, scale }
    }

    fn push_maxpool(&self, group_size: usize) -> Result<Self> {
        let (loc, scale) = maxpool_loc_scale(&self.loc, &self.scale, group_size)?;
        Ok(MarginalCauchy { loc, scale })
    }

    fn width(&self) -> usize {
        self.dim()
    }
}

impl Propagate for FullGaussian {
    fn push_affine(&self, weights: &Matrix, bias: &[f64]) -> Result<Self> {
        let mean = affine_loc(weights, bias, &self.mean)?;
        let cov = self.cov.congruence(weights)?;
        Ok(FullGaussian { mean, cov })
    }

    /// `Σ ↦ D Σ D` with `D = diag(f′(μ))`; ReLU zeroes whole rows and columns
    /// of inactive units.
    fn push_activation(&self, activation: Activation) -> Self {
        let d: Vec<f64> = self.mean.iter().map(|&m| activation.derivative(m)).collect();
        let mut cov = self.cov.matrix().clone();
        for i in 0..cov.rows() {
            for j in 0..cov.cols() {
                cov[(i, j)] *= d[i] * d[j];
            }
        }
        FullGaussian {
            mean: self.mean.iter().map(|&m| activation.apply(m)).collect(),
            cov: PsdMatrix::from_gram(cov),
        }
    }

    fn push_maxpool(&self, group_size: usize) -> Result<Self> {
        check_group(self.dim(), group_size)?;
        let idx = group_argmax(&self.mean, group_size);
        let src = self.cov.matrix();
        let mut cov = Matrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                cov[(a, b)] = src[(i, j)];
            }
        }
        Ok(FullGaussian {
            mean: idx.iter().map(|&i| self.mean[i]).collect(),
            cov: PsdMatrix::from_gram(cov),
        })
    }

    fn width(&self) -> usize {
        self.dim()
    }
}
