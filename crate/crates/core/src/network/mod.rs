//! Feedforward networks: evaluation, Jacobians, initialization, JSON I/O and
//! the reverse-mode tape used for training.

mod activation;
mod pnn;
pub mod tape;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use activation::Activation;
pub(crate) use activation::sigmoid;
pub use pnn::{PnnNetwork, LOG_VARIANCE_RANGE};
pub use tape::{GradTape, Gradients, Var};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Fully connected layer computing `x Wᵀ + b` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        check_dim(weights.rows(), bias.len())?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("bias"));
        }
        Ok(Dense { weights, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_features(&self) -> usize {
        self.weights.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.weights.matvec(x)?;
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        Ok(y)
    }

    fn apply_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_t(&self.weights)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Activation(Activation),
    /// Max over consecutive groups of `group_size` units.
    MaxPool { group_size: usize },
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-group argmax positions (absolute indices into `xs`).
pub(crate) fn group_argmax(xs: &[f64], group_size: usize) -> Vec<usize> {
    xs.chunks(group_size)
        .enumerate()
        .map(|(g, chunk)| g * group_size + argmax(chunk))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

/// Local linearization of one layer at the evaluation point.
enum LocalMap<'a> {
    Dense(&'a Matrix),
    Scale(Vec<f64>),
    Select { in_width: usize, argmax: Vec<usize> },
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input_dim must be positive".into()));
        }
        let mut width = input_dim;
        for layer in &layers {
            match layer {
                Layer::Dense(d) => {
                    check_dim(width, d.in_features())?;
                    check_dim(d.out_features(), d.bias.len())?;
                    width = d.out_features();
                }
                Layer::Activation(a) => a.validate()?,
                Layer::MaxPool { group_size } => {
                    if *group_size == 0 || width % group_size != 0 {
                        return Err(Error::InvalidParameter(format!(
                            "maxpool group {group_size} does not divide width {width}"
                        )));
                    }
                    width /= group_size;
                }
            }
        }
        Ok(Network {
            layers,
            input_dim,
            output_dim: width,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn dense_layers(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn dense_layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.dense_layers()
            .map(|d| d.weights.len() + d.bias.len())
            .sum()
    }

    /// Appends the layers of `next` after this network.
    pub fn then(&self, next: &Network) -> Result<Network> {
        check_dim(self.output_dim, next.input_dim)?;
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        Network::new(self.input_dim, layers)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => d.apply(&h)?,
                Layer::Activation(a) => h.iter().map(|&v| a.apply(v)).collect(),
                Layer::MaxPool { group_size } => h
                    .chunks(*group_size)
                    .map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                    .collect(),
            };
        }
        Ok(h)
    }

    /// Row-wise forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.input_dim, x.cols())?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => d.apply_batch(&h)?,
                Layer::Activation(a) => h.map(|v| a.apply(v)),
                Layer::MaxPool { group_size } => {
                    let g = *group_size;
                    let out_cols = h.cols() / g;
                    let mut out = Matrix::zeros(h.rows(), out_cols);
                    for r in 0..h.rows() {
                        for (o, chunk) in out.row_mut(r).iter_mut().zip(h.row(r).chunks(g)) {
                            *o = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        }
                    }
                    out
                }
            };
        }
        Ok(h)
    }

    /// Jacobian `∂f/∂x` (output_dim × input_dim) at `x`.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        Ok(self.forward_with_jacobian(x)?.1)
    }

    /// Output and Jacobian from one linearization pass.
    ///
    /// Sweeps `min(input_dim, output_dim)` tangent (forward mode) or cotangent
    /// (reverse mode) directions at once, so the cost is that many forward
    /// passes plus the recording pass.
    pub fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        let (y, locals) = self.linearize(x)?;
        let jac = if self.input_dim <= self.output_dim {
            forward_sweep(self.input_dim, &locals)?.transpose()
        } else {
            reverse_sweep(self.output_dim, &locals)?
        };
        Ok((y, jac))
    }

    fn linearize(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<LocalMap<'_>>)> {
        check_dim(self.input_dim, x.len())?;
        let mut h = x.to_vec();
        let mut locals = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    h = d.apply(&h)?;
                    locals.push(LocalMap::Dense(&d.weights));
                }
                Layer::Activation(a) => {
                    locals.push(LocalMap::Scale(h.iter().map(|&v| a.derivative(v)).collect()));
                    h = h.iter().map(|&v| a.apply(v)).collect();
                }
                Layer::MaxPool { group_size } => {
                    let idx = group_argmax(&h, *group_size);
                    let in_width = h.len();
                    h = idx.iter().map(|&i| h[i]).collect();
                    locals.push(LocalMap::Select {
                        in_width,
                        argmax: idx,
                    });
                }
            }
        }
        Ok((h, locals))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Network::from_json(&fs::read_to_string(path)?)
    }
}

/// Tangents stored as rows: `directions × width`.
fn forward_sweep(k: usize, locals: &[LocalMap<'_>]) -> Result<Matrix> {
    let mut t = Matrix::identity(k);
    for local in locals {
        t = match local {
            LocalMap::Dense(w) => t.matmul_t(w)?,
            LocalMap::Scale(d) => {
                for r in 0..t.rows() {
                    for (v, s) in t.row_mut(r).iter_mut().zip(d) {
                        *v *= s;
                    }
                }
                t
            }
            LocalMap::Select { argmax, .. } => {
                let mut out = Matrix::zeros(t.rows(), argmax.len());
                for r in 0..t.rows() {
                    for (o, &i) in out.row_mut(r).iter_mut().zip(argmax) {
                        *o = t[(r, i)];
                    }
                }
                out
            }
        };
    }
    Ok(t)
}

/// Cotangents stored as rows: `outputs × width`.
fn reverse_sweep(k: usize, locals: &[LocalMap<'_>]) -> Result<Matrix> {
    let mut g = Matrix::identity(k);
    for local in locals.iter().rev() {
        g = match local {
            LocalMap::Dense(w) => g.matmul(w)?,
            LocalMap::Scale(d) => {
                for r in 0..g.rows() {
                    for (v, s) in g.row_mut(r).iter_mut().zip(d) {
                        *v *= s;
                    }
                }
                g
            }
            LocalMap::Select { in_width, argmax } => {
                let mut out = Matrix::zeros(g.rows(), *in_width);
                for r in 0..g.rows() {
                    for (j, &i) in argmax.iter().enumerate() {
                        out[(r, i)] = g[(r, j)];
                    }
                }
                out
            }
        };
    }
    Ok(g)
}

/// How [`init_params`] draws the starting parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Weights and biases from `U(±1/√fan_in)`, the usual framework default.
    #[default]
    FanInUniform,
    /// Weights from `U(±√(6/fan_in))`, zero biases.
    KaimingUniform,
}

/// Layer widths, activation and initialization for a plain MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// `[input, hidden..., output]`
    pub widths: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub init: Init,
}

impl MlpSpec {
    pub fn new(widths: &[usize], activation: Activation) -> Self {
        MlpSpec {
            widths: widths.to_vec(),
            activation,
            init: Init::default(),
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// Random MLP per `spec`; the activation follows every dense layer except
/// the last.
pub fn init_params(spec: &MlpSpec, rng: &mut SeededRng) -> Result<Network> {
    if spec.widths.len() < 2 || spec.widths.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "mlp widths {:?} need at least two positive entries",
            spec.widths
        )));
    }
    let mut layers = Vec::new();
    let n = spec.widths.len() - 1;
    for (i, pair) in spec.widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let fan = fan_in as f64;
        let (bound, bias_bound) = match spec.init {
            Init::FanInUniform => (fan.recip().sqrt(), fan.recip().sqrt()),
            Init::KaimingUniform => ((6.0 / fan).sqrt(), 0.0),
        };
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        let bias = match spec.init {
            Init::FanInUniform => (0..fan_out).map(|_| rng.uniform_range(-bias_bound, bias_bound)).collect(),
            Init::KaimingUniform => vec![0.0; fan_out],
        };
        layers.push(Layer::Dense(Dense::new(Matrix::new(fan_out, fan_in, w)?, bias)?));
        if i + 1 < n {
            layers.push(Layer::Activation(spec.activation));
        }
    }
    Network::new(spec.widths[0], layers)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LayerRepr {
    Dense {
        in_features: usize,
        out_features: usize,
        /// Row-major `out_features × in_features`.
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Activation {
        #[serde(flatten)]
        activation: Activation,
    },
    Maxpool {
        group_size: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerRepr>,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        let layers = repr
            .layers
            .into_iter()
            .map(|l| {
                Ok(match l {
                    LayerRepr::Dense {
                        in_features,
                        out_features,
                        weights,
                        bias,
                    } => Layer::Dense(Dense::new(
                        Matrix::new(out_features, in_features, weights)?,
                        bias,
                    )?),
                    LayerRepr::Activation { activation } => Layer::Activation(activation),
                    LayerRepr::Maxpool { group_size } => Layer::MaxPool { group_size },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Network::new(repr.input_dim, layers)?;
        check_dim(repr.output_dim, net.output_dim)?;
        Ok(net)
    }
}

impl From<Network> for NetworkRepr {
    fn from(net: Network) -> Self {
        NetworkRepr {
            input_dim: net.input_dim,
            output_dim: net.output_dim,
            layers: net
                .layers
                .into_iter()
                .map(|l| match l {
                    Layer::Dense(d) => LayerRepr::Dense {
                        in_features: d.in_features(),
                        out_features: d.out_features(),
                        weights: d.weights.into_vec(),
                        bias: d.bias,
                    },
                    Layer::Activation(activation) => LayerRepr::Activation { activation },
                    Layer::MaxPool { group_size } => LayerRepr::Maxpool { group_size },
                })
                .collect(),
        }
    }
}
