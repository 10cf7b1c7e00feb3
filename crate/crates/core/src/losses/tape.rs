//! Batched losses recorded on a [`GradTape`]. Inputs are `batch × classes`
//! (or `batch × outputs`) nodes; every loss returns a `1 × 1` mean.

use std::f64::consts::PI;

use crate::network::{GradTape, Var};
use crate::numerics::Matrix;

/// Added under square roots and logarithms so fully collapsed scales keep
/// finite values and gradients.
pub const SCALE_EPS: f64 = 1e-30;

/// Weight `1 / (batch · (classes − 1))` on every false-class entry, zero on
/// the label column.
fn false_class_weights(rows: usize, cols: usize, labels: &[usize]) -> Matrix {
    assert_eq!(rows, labels.len(), "one label per row");
    let w = 1.0 / (rows * (cols - 1)) as f64;
    let mut m = Matrix::filled(rows, cols, w);
    for (r, &l) in labels.iter().enumerate() {
        m[(r, l)] = 0.0;
    }
    m
}

fn mean_over_false_classes(tape: &mut GradTape, log_prob: Var, labels: &[usize]) -> Var {
    let (rows, cols) = tape.value(log_prob).shape();
    let weighted = tape.mul_const(log_prob, &false_class_weights(rows, cols, labels));
    let total = tape.sum(weighted);
    tape.neg(total)
}

/// Pairwise loss with independent Gaussian outputs `N(loc, var)`.
///
/// Unlike [`pairwise_distribution_loss`](super::pairwise_distribution_loss),
/// the log-probability is not clamped: it is evaluated as `ln Φ` directly,
/// so confidently wrong classes still receive a gradient. The two agree
/// wherever the probability lies inside the clamp interval.
pub fn pairwise_gaussian_loss(tape: &mut GradTape, loc: Var, var: Var, labels: &[usize]) -> Var {
    let loc_l = tape.pick(loc, labels);
    let var_l = tape.pick(var, labels);
    let diff = tape.sub(loc_l, loc);
    let var_sum = tape.add(var_l, var);
    let denom_sq = tape.affine(var_sum, 1.0, SCALE_EPS);
    let denom = tape.sqrt(denom_sq);
    let z = tape.div(diff, denom);
    let log_prob = tape.log_normal_cdf(z);
    mean_over_false_classes(tape, log_prob, labels)
}

/// Pairwise loss with independent Cauchy outputs `C(loc, scale)`, with the
/// same unclamped treatment as [`pairwise_gaussian_loss`].
pub fn pairwise_cauchy_loss(tape: &mut GradTape, loc: Var, scale: Var, labels: &[usize]) -> Var {
    let loc_l = tape.pick(loc, labels);
    let scale_l = tape.pick(scale, labels);
    let diff = tape.sub(loc_l, loc);
    let scale_sum = tape.add(scale_l, scale);
    let denom = tape.affine(scale_sum, 1.0, SCALE_EPS);
    let ratio = tape.div(diff, denom);
    let log_prob = tape.log_cauchy_cdf(ratio);
    mean_over_false_classes(tape, log_prob, labels)
}

/// Mean softmax cross-entropy.
pub fn softmax_ce_loss(tape: &mut GradTape, logits: Var, labels: &[usize]) -> Var {
    let lse = tape.logsumexp_rows(logits);
    let picked = tape.pick(logits, labels);
    let per_row = tape.sub(lse, picked);
    tape.mean(per_row)
}

/// Mean Gaussian NLL per entry of `y`.
pub fn gaussian_nll_loss(tape: &mut GradTape, mean: Var, var: Var, y: &Matrix) -> Var {
    let target = tape.leaf(y.clone());
    let v = tape.affine(var, 1.0, SCALE_EPS);
    let r = tape.sub(target, mean);
    let r2 = tape.square(r);
    let quad = tape.div(r2, v);
    let logv = tape.ln(v);
    let both = tape.add(logv, quad);
    let half = tape.affine(both, 0.5, 0.5 * (2.0 * PI).ln());
    tape.mean(half)
}

/// Mean Cauchy NLL per entry of `y`.
pub fn cauchy_nll_loss(tape: &mut GradTape, loc: Var, scale: Var, y: &Matrix) -> Var {
    let target = tape.leaf(y.clone());
    let g = tape.affine(scale, 1.0, SCALE_EPS);
    let r = tape.sub(target, loc);
    let z = tape.div(r, g);
    let z2 = tape.square(z);
    let one_plus = tape.affine(z2, 1.0, 1.0);
    let log_tail = tape.ln(one_plus);
    let log_g = tape.ln(g);
    let both = tape.add(log_tail, log_g);
    let per = tape.affine(both, 1.0, PI.ln());
    tape.mean(per)
}
