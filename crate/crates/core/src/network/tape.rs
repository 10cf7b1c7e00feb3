//! Reverse-mode automatic differentiation over dense 2-D values.
//!
//! Every recorded node holds a `Matrix`; scalars are `1 × 1`. Binary
//! elementwise ops broadcast a `1 × c` row, an `r × 1` column or a `1 × 1`
//! scalar against the other operand.
//!
//! Recording ops panic on shape mismatches or on variables from another tape;
//! both are programming errors. [`GradTape::grad`] reports a foreign loss node
//! as [`Error::UnrecordedNode`].
//!
//! Subgradient conventions: ReLU-family ops and `max` send the gradient to the
//! pass-through branch on ties (`x ≥ 0`, first operand), `abs` and `sqrt` have
//! zero gradient at 0, `clamp` passes the gradient on the closed interval.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::network::{group_argmax, Activation};
use crate::numerics::{
    erf, gemm, log_std_cauchy_cdf, log_std_cauchy_cdf_slope, log_std_normal_cdf, log_std_normal_cdf_slope, Matrix,
};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Max(usize, usize),
    Neg(usize),
    Exp(usize),
    Log(usize),
    Erf(usize),
    Atan(usize),
    LogNormalCdf(usize),
    LogCauchyCdf(usize),
    Sqrt(usize),
    Abs(usize),
    Square(usize),
    Affine { x: usize, mul: f64 },
    Clamp { x: usize, lo: f64, hi: f64 },
    Act { x: usize, kind: Activation },
    ActSlope { scale: usize, at: usize, kind: Activation },
    MatMulT(usize, usize),
    Sum(usize),
    Mean(usize),
    RowSums(usize),
    Pick { x: usize, cols: Vec<usize> },
    LogSumExpRows(usize),
    MulConst { x: usize, c: Matrix },
    Select { x: usize, in_cols: usize, argmax: Vec<usize> },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records a computation for one reverse sweep.
pub struct GradTape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

fn bcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast shapes {a:?} and {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

#[inline]
fn at(m: &Matrix, r: usize, c: usize) -> f64 {
    let rr = if m.rows() == 1 { 0 } else { r };
    let cc = if m.cols() == 1 { 0 } else { c };
    m[(rr, cc)]
}

/// Sums `g` down to `shape` along broadcast dimensions.
fn reduce_to(g: Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g;
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let rr = if shape.0 == 1 { 0 } else { r };
            let cc = if shape.1 == 1 { 0 } else { c };
            out[(rr, cc)] += g[(r, c)];
        }
    }
    out
}

fn broadcast_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let (rows, cols) = bcast_shape(a.shape(), b.shape());
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out[(r, c)] = f(at(a, r, c), at(b, r, c));
        }
    }
    out
}

impl GradTape {
    pub fn new() -> Self {
        GradTape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable recorded on a different tape");
        v.index
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Matrix::filled(1, 1, value))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[self.idx(v)].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m[(0, 0)]
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let value = broadcast_map(&self.nodes[ia].value, &self.nodes[ib].value, f);
        self.push(value, op(ia, ib))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia].value.map(f);
        self.push(value, op(ia))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div)
    }

    pub fn max(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| if x >= y { x } else { y }, Op::Max)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log)
    }

    pub fn erf(&mut self, a: Var) -> Var {
        self.unary(a, erf, Op::Erf)
    }

    pub fn atan(&mut self, a: Var) -> Var {
        self.unary(a, f64::atan, Op::Atan)
    }

    /// `ln Φ(a)` with Φ the standard normal CDF, stable far into the lower tail.
    pub fn log_normal_cdf(&mut self, a: Var) -> Var {
        self.unary(a, log_std_normal_cdf, Op::LogNormalCdf)
    }

    /// `ln(½ + atan(a)/π)`, the standard Cauchy log-CDF.
    pub fn log_cauchy_cdf(&mut self, a: Var) -> Var {
        self.unary(a, log_std_cauchy_cdf, Op::LogCauchyCdf)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square)
    }

    /// `mul · a + add` with constant coefficients.
    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia].value.map(|x| mul * x + add);
        self.push(value, Op::Affine { x: ia, mul })
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia].value.map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp { x: ia, lo, hi })
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia].value.map(|x| kind.apply(x));
        self.push(value, Op::Act { x: ia, kind })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    /// `|f′(at)| · scale`, the local-linearization scale update.
    pub fn activation_slope(&mut self, scale: Var, at_point: Var, kind: Activation) -> Var {
        let (is, ia) = (self.idx(scale), self.idx(at_point));
        let value = self.nodes[is]
            .value
            .zip_map(&self.nodes[ia].value, |s, x| kind.derivative(x).abs() * s)
            .expect("activation_slope shape mismatch");
        self.push(
            value,
            Op::ActSlope {
                scale: is,
                at: ia,
                kind,
            },
        )
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let value = self.nodes[ia]
            .value
            .matmul_t(&self.nodes[ib].value)
            .expect("matmul_t shape mismatch");
        self.push(value, Op::MatMulT(ia, ib))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let s = self.nodes[ia].value.as_slice().iter().sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(ia))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let m = &self.nodes[ia].value;
        let s = m.as_slice().iter().sum::<f64>() / m.len() as f64;
        self.push(Matrix::filled(1, 1, s), Op::Mean(ia))
    }

    /// Per-row sums as an `r × 1` column.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let m = &self.nodes[ia].value;
        let sums = m.rows_iter().map(|r| r.iter().sum()).collect();
        self.push(Matrix::from_vec_unchecked(m.rows(), 1, sums), Op::RowSums(ia))
    }

    /// Column `cols[r]` of every row `r`, as an `r × 1` column.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Var {
        let ia = self.idx(a);
        let m = &self.nodes[ia].value;
        assert_eq!(m.rows(), cols.len(), "pick needs one column index per row");
        let vals = cols.iter().enumerate().map(|(r, &c)| m[(r, c)]).collect();
        let value = Matrix::from_vec_unchecked(m.rows(), 1, vals);
        self.push(
            value,
            Op::Pick {
                x: ia,
                cols: cols.to_vec(),
            },
        )
    }

    /// Row-wise `log Σ exp`, stabilized by the row maximum.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let m = &self.nodes[ia].value;
        let vals = m
            .rows_iter()
            .map(|row| {
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
            })
            .collect();
        self.push(Matrix::from_vec_unchecked(m.rows(), 1, vals), Op::LogSumExpRows(ia))
    }

    /// Elementwise product with a constant (e.g. a mask).
    pub fn mul_const(&mut self, a: Var, c: &Matrix) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia]
            .value
            .zip_map(c, |x, y| x * y)
            .expect("mul_const shape mismatch");
        self.push(value, Op::MulConst { x: ia, c: c.clone() })
    }

    /// Row-wise max over consecutive groups of columns.
    pub fn maxpool(&mut self, a: Var, group_size: usize) -> Var {
        self.select_by(a, a, group_size)
    }

    /// Per row and group, picks the entry of `values` at the argmax of `keys`
    /// (lowest index on ties). Gradients flow to `values` only.
    pub fn select_by(&mut self, values: Var, keys: Var, group_size: usize) -> Var {
        let (iv, ik) = (self.idx(values), self.idx(keys));
        let vm = &self.nodes[iv].value;
        let km = &self.nodes[ik].value;
        assert_eq!(vm.shape(), km.shape(), "select_by shape mismatch");
        assert!(group_size > 0 && vm.cols() % group_size == 0);
        let out_cols = vm.cols() / group_size;
        let mut value = Matrix::zeros(vm.rows(), out_cols);
        let mut argmax = Vec::with_capacity(vm.rows() * out_cols);
        for r in 0..vm.rows() {
            let idx = group_argmax(km.row(r), group_size);
            for (j, &i) in idx.iter().enumerate() {
                value[(r, j)] = vm[(r, i)];
            }
            argmax.extend(idx);
        }
        let in_cols = vm.cols();
        self.push(
            value,
            Op::Select {
                x: iv,
                in_cols,
                argmax,
            },
        )
    }

    /// Reverse sweep from the scalar node `loss`.
    pub fn grad(&self, loss: Var) -> Result<Gradients> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(Error::UnrecordedNode(loss.index));
        }
        let root = loss.index;
        if self.nodes[root].value.shape() != (1, 1) {
            return Err(Error::InvalidParameter(
                "gradient root must be a 1x1 scalar".into(),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root + 1];
        grads[root] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn backward_node(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, d: Matrix| match &mut grads[j] {
            Some(existing) => {
                for (e, v) in existing.as_mut_slice().iter_mut().zip(d.as_slice()) {
                    *e += v;
                }
            }
            slot @ None => *slot = Some(d),
        };
        let ew = |x: &Matrix, f: &dyn Fn(f64, f64) -> f64| -> Matrix {
            g.zip_map(x, f).expect("gradient shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, reduce_to(g.clone(), val(*a).shape()));
                acc(*b, reduce_to(g.clone(), val(*b).shape()));
            }
            Op::Sub(a, b) => {
                acc(*a, reduce_to(g.clone(), val(*a).shape()));
                acc(*b, reduce_to(g.scale(-1.0), val(*b).shape()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, reduce_to(broadcast_map(g, vb, |x, y| x * y), va.shape()));
                acc(*b, reduce_to(broadcast_map(g, va, |x, y| x * y), vb.shape()));
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, reduce_to(broadcast_map(g, vb, |x, y| x / y), va.shape()));
                let out = &node.value;
                let t = broadcast_map(g, out, |x, o| x * o);
                acc(*b, reduce_to(broadcast_map(&t, vb, |x, y| -x / y), vb.shape()));
            }
            Op::Max(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (rows, cols) = g.shape();
                let mut ga = Matrix::zeros(rows, cols);
                let mut gb = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        if at(va, r, c) >= at(vb, r, c) {
                            ga[(r, c)] = g[(r, c)];
                        } else {
                            gb[(r, c)] = g[(r, c)];
                        }
                    }
                }
                acc(*a, reduce_to(ga, va.shape()));
                acc(*b, reduce_to(gb, vb.shape()));
            }
            Op::Neg(a) => acc(*a, g.scale(-1.0)),
            Op::Exp(a) => acc(*a, ew(&node.value, &|x, o| x * o)),
            Op::Log(a) => acc(*a, ew(val(*a), &|x, v| x / v)),
            Op::Erf(a) => acc(
                *a,
                ew(val(*a), &|x, v| x * 2.0 / PI.sqrt() * (-v * v).exp()),
            ),
            Op::Atan(a) => acc(*a, ew(val(*a), &|x, v| x / (1.0 + v * v))),
            Op::LogNormalCdf(a) => acc(*a, ew(val(*a), &|x, v| x * log_std_normal_cdf_slope(v))),
            Op::LogCauchyCdf(a) => acc(*a, ew(val(*a), &|x, v| x * log_std_cauchy_cdf_slope(v))),
            Op::Sqrt(a) => acc(
                *a,
                ew(&node.value, &|x, o| if o > 0.0 { 0.5 * x / o } else { 0.0 }),
            ),
            Op::Abs(a) => acc(
                *a,
                ew(val(*a), &|x, v| {
                    if v > 0.0 {
                        x
                    } else if v < 0.0 {
                        -x
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Square(a) => acc(*a, ew(val(*a), &|x, v| 2.0 * x * v)),
            Op::Affine { x, mul } => acc(*x, g.scale(*mul)),
            Op::Clamp { x, lo, hi } => acc(
                *x,
                ew(val(*x), &|d, v| if v >= *lo && v <= *hi { d } else { 0.0 }),
            ),
            Op::Act { x, kind } => acc(*x, ew(val(*x), &|d, v| d * kind.derivative(v))),
            Op::ActSlope { scale, at: p, kind } => {
                let (vs, vp) = (val(*scale), val(*p));
                acc(*scale, ew(vp, &|d, v| d * kind.derivative(v).abs()));
                let gs = g.zip_map(vs, |d, s| d * s).expect("gradient shape");
                acc(
                    *p,
                    gs.zip_map(vp, |d, v| {
                        d * kind.derivative(v).signum() * kind.second_derivative(v)
                    })
                    .expect("gradient shape"),
                );
            }
            Op::MatMulT(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                gemm(1.0, g, false, vb, false, 0.0, &mut ga);
                let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                gemm(1.0, g, true, va, false, 0.0, &mut gb);
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g[(0, 0)]));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g[(0, 0)] / (r * c) as f64));
            }
            Op::RowSums(a) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i).fill(g[(i, 0)]);
                }
                acc(*a, d);
            }
            Op::Pick { x, cols } => {
                let (r, c) = val(*x).shape();
                let mut d = Matrix::zeros(r, c);
                for (i, &j) in cols.iter().enumerate() {
                    d[(i, j)] = g[(i, 0)];
                }
                acc(*x, d);
            }
            Op::LogSumExpRows(a) => {
                let va = val(*a);
                let mut d = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let lse = node.value[(r, 0)];
                    for (o, &v) in d.row_mut(r).iter_mut().zip(va.row(r)) {
                        *o = g[(r, 0)] * (v - lse).exp();
                    }
                }
                acc(*a, d);
            }
            Op::MulConst { x, c } => acc(*x, g.zip_map(c, |d, k| d * k).expect("gradient shape")),
            Op::Select { x, in_cols, argmax } => {
                let rows = g.rows();
                let out_cols = g.cols();
                let mut d = Matrix::zeros(rows, *in_cols);
                for r in 0..rows {
                    for j in 0..out_cols {
                        d[(r, argmax[r * out_cols + j])] += g[(r, j)];
                    }
                }
                acc(*x, d);
            }
        }
    }
}

/// Result of a reverse sweep.
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to `v`; `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `v`, zero-filled when the loss ignores it.
    pub fn wrt(&self, v: Var, shape: (usize, usize)) -> Result<Matrix> {
        if v.tape != self.tape {
            return Err(Error::UnrecordedNode(v.index));
        }
        Ok(self
            .get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1)))
    }
}
