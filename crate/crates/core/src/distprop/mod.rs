//! Pushing input distributions through networks.

mod families;
mod moment;
mod stable;

use serde::{Deserialize, Serialize};

pub use families::{FullGaussian, MarginalCauchy, MarginalGaussian, Propagate};
pub use moment::{moment_match_relu, moment_match_sigmoid};
pub use stable::{MarginalStable, StableMode};

use crate::error::{check_dim, Error, Result};
use crate::network::{Activation, Layer, Network, PnnNetwork};
use crate::numerics::{sample, scaled_gram, Matrix, PsdMatrix, SeededRng};

/// A distribution over network inputs or outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution {
    MarginalGaussian(MarginalGaussian),
    FullGaussian(FullGaussian),
    MarginalCauchy(MarginalCauchy),
}

impl Distribution {
    pub fn dim(&self) -> usize {
        match self {
            Distribution::MarginalGaussian(d) => d.dim(),
            Distribution::FullGaussian(d) => d.dim(),
            Distribution::MarginalCauchy(d) => d.dim(),
        }
    }

    /// Mean for the Gaussian families, median for Cauchy.
    pub fn location(&self) -> &[f64] {
        match self {
            Distribution::MarginalGaussian(d) => d.loc(),
            Distribution::FullGaussian(d) => d.mean(),
            Distribution::MarginalCauchy(d) => d.loc(),
        }
    }

    /// Per-coordinate σ (Gaussian) or γ (Cauchy).
    pub fn marginal_scale(&self) -> Vec<f64> {
        match self {
            Distribution::MarginalGaussian(d) => d.scale().to_vec(),
            Distribution::FullGaussian(d) => d.std_devs(),
            Distribution::MarginalCauchy(d) => d.scale().to_vec(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Distribution::MarginalGaussian(_) => "marginal_gaussian",
            Distribution::FullGaussian(_) => "full_gaussian",
            Distribution::MarginalCauchy(_) => "marginal_cauchy",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, Distribution::MarginalCauchy(_))
    }

    /// Gaussian families as a full Gaussian; `None` for Cauchy.
    pub fn as_full_gaussian(&self) -> Option<FullGaussian> {
        match self {
            Distribution::MarginalGaussian(d) => Some(FullGaussian::from(d)),
            Distribution::FullGaussian(d) => Some(d.clone()),
            Distribution::MarginalCauchy(_) => None,
        }
    }
}

impl From<MarginalGaussian> for Distribution {
    fn from(d: MarginalGaussian) -> Self {
        Distribution::MarginalGaussian(d)
    }
}

impl From<FullGaussian> for Distribution {
    fn from(d: FullGaussian) -> Self {
        Distribution::FullGaussian(d)
    }
}

impl From<MarginalCauchy> for Distribution {
    fn from(d: MarginalCauchy) -> Self {
        Distribution::MarginalCauchy(d)
    }
}

/// How to push a distribution through a whole network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PropagationMethod {
    /// Linearize the whole network at the input location: `Σ_y = J Σ Jᵀ` for
    /// Gaussians, `γ_y = |J| γ` for Cauchy inputs.
    SdpFull,
    /// Layer-by-layer with independent Gaussian coordinates.
    SdpMarginalGaussian,
    /// Layer-by-layer with independent Cauchy coordinates.
    SdpMarginalCauchy,
    /// Layer-by-layer Gaussian moment matching at each nonlinearity.
    MarginalMomentMatch,
    /// Fit to `k` Monte-Carlo samples of the output.
    McEstimate { k: usize },
}

impl PropagationMethod {
    pub fn name(&self) -> String {
        match self {
            PropagationMethod::SdpFull => "sdp_full".into(),
            PropagationMethod::SdpMarginalGaussian => "sdp_marginal_gaussian".into(),
            PropagationMethod::SdpMarginalCauchy => "sdp_marginal_cauchy".into(),
            PropagationMethod::MarginalMomentMatch => "marginal_moment_match".into(),
            PropagationMethod::McEstimate { k } => format!("mc_estimate_{k}"),
        }
    }
}

/// Knobs that only some methods read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationOptions {
    /// Moment-match sigmoid layers by quadrature instead of linearizing them.
    #[serde(default)]
    pub sigmoid_quadrature: bool,
}

/// [`propagate_with`] using default options.
pub fn propagate(
    net: &Network,
    input: &Distribution,
    method: PropagationMethod,
    rng: &mut SeededRng,
) -> Result<Distribution> {
    propagate_with(net, input, method, PropagationOptions::default(), rng)
}

/// Pushes `input` through `net`. Only [`PropagationMethod::McEstimate`]
/// draws from `rng`.
///
/// Output locations of the SDP methods equal `net.forward(location)`.
pub fn propagate_with(
    net: &Network,
    input: &Distribution,
    method: PropagationMethod,
    options: PropagationOptions,
    rng: &mut SeededRng,
) -> Result<Distribution> {
    check_dim(net.input_dim(), input.dim())?;
    let incompatible = || Error::IncompatibleMethod {
        method: match method {
            PropagationMethod::SdpFull => "sdp_full",
            PropagationMethod::SdpMarginalGaussian => "sdp_marginal_gaussian",
            PropagationMethod::SdpMarginalCauchy => "sdp_marginal_cauchy",
            PropagationMethod::MarginalMomentMatch => "marginal_moment_match",
            PropagationMethod::McEstimate { .. } => "mc_estimate",
        },
        family: input.family(),
    };
    match method {
        PropagationMethod::SdpFull => sdp_full(net, input).map(Into::into),
        PropagationMethod::SdpMarginalGaussian => {
            let g = match input {
                Distribution::MarginalGaussian(d) => d.clone(),
                Distribution::FullGaussian(d) => d.marginal(),
                Distribution::MarginalCauchy(_) => return Err(incompatible()),
            };
            Ok(g.push_network(net)?.into())
        }
        PropagationMethod::SdpMarginalCauchy => match input {
            Distribution::MarginalCauchy(d) => Ok(d.push_network(net)?.into()),
            _ => Err(incompatible()),
        },
        PropagationMethod::MarginalMomentMatch => {
            let g = match input {
                Distribution::MarginalGaussian(d) => d.clone(),
                Distribution::FullGaussian(d) => d.marginal(),
                Distribution::MarginalCauchy(_) => return Err(incompatible()),
            };
            moment_match_network(net, &g, options).map(Into::into)
        }
        PropagationMethod::McEstimate { k } => mc_estimate(net, input, k, rng),
    }
}

fn sdp_full(net: &Network, input: &Distribution) -> Result<Distribution> {
    let (y, jac) = net.forward_with_jacobian(input.location())?;
    Ok(match input {
        Distribution::MarginalGaussian(d) => {
            let cov = PsdMatrix::from_gram(scaled_gram(&jac, &d.variances()));
            FullGaussian::new(y, cov)?.into()
        }
        Distribution::FullGaussian(d) => FullGaussian::new(y, d.cov().congruence(&jac)?)?.into(),
        Distribution::MarginalCauchy(d) => {
            let scale = jac.map(f64::abs).matvec(d.scale())?;
            MarginalCauchy::new(y, scale)?.into()
        }
    })
}

fn moment_match_network(
    net: &Network,
    input: &MarginalGaussian,
    options: PropagationOptions,
) -> Result<MarginalGaussian> {
    let mut d = input.clone();
    for layer in net.layers() {
        d = match layer {
            Layer::Activation(Activation::Relu) => {
                let (loc, scale) = d
                    .loc()
                    .iter()
                    .zip(d.scale())
                    .map(|(&m, &s)| moment_match_relu(m, s))
                    .unzip();
                MarginalGaussian::new(loc, scale)?
            }
            Layer::Activation(Activation::Sigmoid) if options.sigmoid_quadrature => {
                let (loc, scale) = d
                    .loc()
                    .iter()
                    .zip(d.scale())
                    .map(|(&m, &s)| moment_match_sigmoid(m, s))
                    .unzip();
                MarginalGaussian::new(loc, scale)?
            }
            // Other nonlinearities fall back to local linearization.
            other => d.push_layer(other)?,
        };
    }
    Ok(d)
}

/// Fits the output of `k` pushed-forward input samples: a full Gaussian from
/// the sample mean and covariance for Gaussian inputs, a marginal Cauchy from
/// the median and half the interquartile range for Cauchy inputs.
fn mc_estimate(net: &Network, input: &Distribution, k: usize, rng: &mut SeededRng) -> Result<Distribution> {
    if k < 2 {
        return Err(Error::TooFewSamples { need: 2, got: k });
    }
    let xs = sample(input, k, rng)?;
    let ys = net.forward_batch(&xs)?;
    if input.is_gaussian() {
        let (mean, cov) = mean_and_cov(&ys);
        Ok(FullGaussian::new(mean, PsdMatrix::from_gram(cov))?.into())
    } else {
        let (loc, scale) = (0..ys.cols())
            .map(|c| {
                let mut col = ys.column(c);
                col.sort_by(f64::total_cmp);
                let med = quantile_sorted(&col, 0.5);
                let iqr = quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25);
                (med, 0.5 * iqr)
            })
            .unzip();
        Ok(MarginalCauchy::new(loc, scale)?.into())
    }
}

/// Sample mean and unbiased covariance of the rows of `x`.
pub fn mean_and_cov(x: &Matrix) -> (Vec<f64>, Matrix) {
    let (n, d) = x.shape();
    let mut mean = vec![0.0; d];
    for row in x.rows_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = x.clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let cov = centered.t_matmul(&centered).expect("same rows").scale(1.0 / (n as f64 - 1.0));
    (mean, cov)
}

/// Linear-interpolation quantile of ascending data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Output distribution of a probabilistic network under Gaussian input noise:
/// `N(f_μ(x), diag(f_Σ(x)) + J Σ_x Jᵀ)` with `J` the Jacobian of the mean path.
pub fn pnn_sdp_combine(pnn: &PnnNetwork, x: &[f64], input_cov: &PsdMatrix) -> Result<FullGaussian> {
    check_dim(pnn.input_dim(), input_cov.dim())?;
    let (_, var) = pnn.predict(x)?;
    let (mean, jac) = pnn.mean_network().forward_with_jacobian(x)?;
    let mut cov = input_cov.congruence(&jac)?.into_matrix();
    for (i, v) in var.iter().enumerate() {
        cov[(i, i)] += v;
    }
    FullGaussian::new(mean, PsdMatrix::from_gram(cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Dense, MlpSpec};

    fn relu_net(widths: &[usize], seed: u64) -> Network {
        init_params(&MlpSpec::new(widths, Activation::Relu), &mut SeededRng::new(seed)).unwrap()
    }

    #[test]
    fn locations_match_forward() {
        let net = relu_net(&[4, 16, 16, 3], 3);
        let x = vec![0.2, -0.4, 1.1, 0.0];
        let y = net.forward(&x).unwrap();
        let mut rng = SeededRng::new(0);
        let g: Distribution = MarginalGaussian::isotropic(x.clone(), 0.1).unwrap().into();
        let c: Distribution = MarginalCauchy::isotropic(x, 0.1).unwrap().into();
        for (d, m) in [
            (&g, PropagationMethod::SdpFull),
            (&g, PropagationMethod::SdpMarginalGaussian),
            (&c, PropagationMethod::SdpFull),
            (&c, PropagationMethod::SdpMarginalCauchy),
        ] {
            assert_eq!(propagate(&net, d, m, &mut rng).unwrap().location(), &y[..], "{m:?}");
        }
    }

    #[test]
    fn single_layer_methods_agree() {
        // Without nonlinearities every SDP variant is exact and they coincide
        // on the marginals.
        let net = Network::new(
            2,
            vec![Layer::Dense(Dense::new(Matrix::from_rows(&[[1.0, -2.0], [0.5, 0.5]]).unwrap(), vec![0.0, 1.0]).unwrap())],
        )
        .unwrap();
        let g: Distribution = MarginalGaussian::new(vec![1.0, 2.0], vec![0.3, 0.4]).unwrap().into();
        let mut rng = SeededRng::new(0);
        let full = propagate(&net, &g, PropagationMethod::SdpFull, &mut rng).unwrap();
        let marg = propagate(&net, &g, PropagationMethod::SdpMarginalGaussian, &mut rng).unwrap();
        let mm = propagate(&net, &g, PropagationMethod::MarginalMomentMatch, &mut rng).unwrap();
        for (a, b) in full.marginal_scale().iter().zip(marg.marginal_scale()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(marg, mm);
    }

    #[test]
    fn incompatible_pairs_rejected() {
        let net = relu_net(&[2, 4, 1], 0);
        let mut rng = SeededRng::new(0);
        let c: Distribution = MarginalCauchy::isotropic(vec![0.0, 0.0], 1.0).unwrap().into();
        let g: Distribution = MarginalGaussian::isotropic(vec![0.0, 0.0], 1.0).unwrap().into();
        for m in [PropagationMethod::SdpMarginalGaussian, PropagationMethod::MarginalMomentMatch] {
            assert!(matches!(propagate(&net, &c, m, &mut rng), Err(Error::IncompatibleMethod { .. })));
        }
        assert!(matches!(
            propagate(&net, &g, PropagationMethod::SdpMarginalCauchy, &mut rng),
            Err(Error::IncompatibleMethod { .. })
        ));
        assert!(matches!(
            propagate(&net, &g, PropagationMethod::McEstimate { k: 1 }, &mut rng),
            Err(Error::TooFewSamples { .. })
        ));
        let wrong: Distribution = MarginalGaussian::isotropic(vec![0.0; 3], 1.0).unwrap().into();
        assert!(matches!(
            propagate(&net, &wrong, PropagationMethod::SdpFull, &mut rng),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn full_covariance_is_jacobian_congruence() {
        let net = relu_net(&[3, 8, 2], 11);
        let x = vec![0.5, 0.1, -0.3];
        let g: Distribution = MarginalGaussian::new(x.clone(), vec![0.2, 0.5, 1.0]).unwrap().into();
        let out = propagate(&net, &g, PropagationMethod::SdpFull, &mut SeededRng::new(0)).unwrap();
        let j = net.jacobian(&x).unwrap();
        let d = Matrix::from_diag(&[0.04, 0.25, 1.0]);
        let expected = j.matmul(&d).unwrap().matmul_t(&j).unwrap();
        let Distribution::FullGaussian(fg) = out else { panic!() };
        assert!(fg.cov().matrix().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn mc_estimate_is_seeded() {
        let net = relu_net(&[2, 6, 2], 4);
        let c: Distribution = MarginalCauchy::isotropic(vec![0.3, 0.3], 0.5).unwrap().into();
        let m = PropagationMethod::McEstimate { k: 50 };
        let a = propagate(&net, &c, m, &mut SeededRng::new(9)).unwrap();
        let b = propagate(&net, &c, m, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    }

    #[test]
    fn pnn_combination_adds_aleatoric_variance() {
        let mut rng = SeededRng::new(2);
        let pnn = PnnNetwork::init(&[2, 8, 1], Activation::Relu, &mut rng).unwrap();
        let x = [0.4, -0.1];
        let zero = PsdMatrix::from_diagonal(&[0.0, 0.0]).unwrap();
        let (mean, var) = pnn.predict(&x).unwrap();
        let out = pnn_sdp_combine(&pnn, &x, &zero).unwrap();
        assert_eq!(out.mean(), &mean[..]);
        assert!((out.cov().matrix()[(0, 0)] - var[0]).abs() < 1e-15);
        let noisy = PsdMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        let out = pnn_sdp_combine(&pnn, &x, &noisy).unwrap();
        let j = pnn.mean_network().jacobian(&x).unwrap();
        let extra = 0.5 * (j[(0, 0)].powi(2) + j[(0, 1)].powi(2));
        assert!((out.cov().matrix()[(0, 0)] - var[0] - extra).abs() < 1e-12);
    }
}
