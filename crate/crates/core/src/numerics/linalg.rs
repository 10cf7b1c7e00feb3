//! Small dense row-major matrices and the PSD factorization used for sampling
//! full-covariance Gaussians.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Matrix::from_vec_unchecked(1, v.len(), v.to_vec())
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Matrix::from_vec_unchecked(v.len(), 1, v.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `A · B`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        Ok(out)
    }

    /// `A · Bᵀ`
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.cols, other.cols)?;
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(1.0, self, false, other, true, 0.0, &mut out);
        Ok(out)
    }

    /// `Aᵀ · B`
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.rows, other.rows)?;
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(1.0, self, true, other, false, 0.0, &mut out);
        Ok(out)
    }

    /// `A · x` for a column vector `x`; equivalently `x Aᵀ` for a row vector.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        Ok(self.rows_iter().map(|row| dot(row, x)).collect())
    }

    /// `Aᵀ · y`
    pub fn t_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.rows_iter().zip(y) {
            if yi != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += a * yi;
                }
            }
        }
        Ok(out)
    }

    /// Averages `A` with its transpose in place. Square matrices only.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] == 0.0))
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Inner product with independent partial sums so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// `c ← alpha · op(a) · op(b) + beta · c`, with `op` an optional transpose.
pub(crate) fn gemm(
    alpha: f64,
    a: &Matrix,
    trans_a: bool,
    b: &Matrix,
    trans_b: bool,
    beta: f64,
    c: &mut Matrix,
) {
    let (m, k) = if trans_a {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (kb, n) = if trans_b {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((m, n), c.shape(), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c.data {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    // SAFETY: strides and extents describe exactly the buffers of `a`, `b`
    // and `c`, whose shapes were checked above; `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// Symmetric positive semi-definite matrix (covariances, Gram products).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsdMatrix(Matrix);

const SYMMETRY_TOL: f64 = 1e-9;
const EIGEN_TOL: f64 = 1e-9;

impl PsdMatrix {
    /// Validates symmetry and the eigenvalue floor before wrapping `m`.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::DimMismatch {
                expected: m.rows,
                got: m.cols,
            });
        }
        let scale = m.max_abs().max(1.0);
        for i in 0..m.rows {
            for j in (i + 1)..m.cols {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotPsd);
                }
            }
        }
        if m.is_diagonal() {
            if m.diag().iter().any(|&d| d < 0.0) {
                return Err(Error::NotPsd);
            }
            return Ok(PsdMatrix(m));
        }
        let eig = m.to_nalgebra().symmetric_eigenvalues();
        let largest = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let floor = -EIGEN_TOL * largest.max(1.0);
        if eig.iter().any(|&l| l < floor) {
            return Err(Error::NotPsd);
        }
        Ok(PsdMatrix(m))
    }

    pub fn from_diagonal(variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("variances"));
        }
        if variances.iter().any(|&v| v < 0.0) {
            return Err(Error::NotPsd);
        }
        Ok(PsdMatrix(Matrix::from_diag(variances)))
    }

    /// Wraps a matrix that is PSD by construction (`A Σ Aᵀ`, sample covariances),
    /// removing rounding asymmetry.
    pub(crate) fn from_gram(mut m: Matrix) -> Self {
        m.symmetrize();
        PsdMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn variances(&self) -> Vec<f64> {
        self.0.diag()
    }

    /// `A Σ Aᵀ`
    pub fn congruence(&self, a: &Matrix) -> Result<PsdMatrix> {
        check_dim(self.dim(), a.cols())?;
        if self.0.is_diagonal() {
            return Ok(PsdMatrix::from_gram(scaled_gram(a, &self.0.diag())));
        }
        let a_sigma = a.matmul(&self.0)?;
        Ok(PsdMatrix::from_gram(a_sigma.matmul_t(a)?))
    }
}

impl<'de> Deserialize<'de> for PsdMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Matrix::deserialize(d)?;
        PsdMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// `A diag(d) Aᵀ` without materializing the diagonal matrix.
pub(crate) fn scaled_gram(a: &Matrix, d: &[f64]) -> Matrix {
    let mut scaled = a.clone();
    for r in 0..scaled.rows {
        for (v, &s) in scaled.row_mut(r).iter_mut().zip(d) {
            *v *= s;
        }
    }
    let mut out = Matrix::zeros(a.rows, a.rows);
    gemm(1.0, &scaled, false, a, true, 0.0, &mut out);
    out
}

const MAX_JITTER_RETRIES: usize = 3;

/// Lower-triangular `L` with `L Lᵀ ≈ m`.
///
/// Falls back to adding `1e-9 · trace / n` to the diagonal (×10 per retry, at
/// most three retries) when the plain Cholesky step meets a non-positive pivot,
/// which happens routinely for rank-deficient Jacobian products.
pub fn psd_factor(m: &PsdMatrix) -> Result<Matrix> {
    let a = m.matrix();
    if let Some(l) = cholesky(a, 0.0) {
        return Ok(l);
    }
    let n = a.rows.max(1) as f64;
    let mut jitter = 1e-9 * (a.trace() / n).max(f64::MIN_POSITIVE);
    for _ in 0..MAX_JITTER_RETRIES {
        if let Some(l) = cholesky(a, jitter) {
            return Ok(l);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPsd)
}

fn cholesky(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        d -= dot(&l.row(j)[..j], &l.row(j)[..j]);
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn factor_identity() {
        let l = psd_factor(&PsdMatrix::new(Matrix::identity(3)).unwrap()).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn factor_diagonal() {
        let m = PsdMatrix::new(Matrix::from_rows(&[[4.0, 0.0], [0.0, 9.0]]).unwrap()).unwrap();
        let l = psd_factor(&m).unwrap();
        assert_eq!(l, Matrix::from_rows(&[[2.0, 0.0], [0.0, 3.0]]).unwrap());
    }

    #[test]
    fn factor_random_gram_reconstructs() {
        let mut rng = SeededRng::new(11);
        let m = random_matrix(5, 5, &mut rng);
        let sigma = PsdMatrix::new(m.matmul_t(&m).unwrap()).unwrap();
        let l = psd_factor(&sigma).unwrap();
        let back = l.matmul_t(&l).unwrap();
        assert!(back.max_abs_diff(sigma.matrix()) <= 1e-7 * (1.0 + sigma.matrix().max_abs()));
    }

    #[test]
    fn factor_rank_deficient_uses_jitter() {
        let mut rng = SeededRng::new(3);
        let m = random_matrix(6, 2, &mut rng);
        let sigma = PsdMatrix::new(m.matmul_t(&m).unwrap()).unwrap();
        let l = psd_factor(&sigma).unwrap();
        let back = l.matmul_t(&l).unwrap();
        assert!(back.max_abs_diff(sigma.matrix()) <= 1e-7 * (1.0 + sigma.matrix().max_abs()));
    }

    #[test]
    fn factor_zero_matrix() {
        let sigma = PsdMatrix::new(Matrix::zeros(3, 3)).unwrap();
        let l = psd_factor(&sigma).unwrap();
        assert!(l.matmul_t(&l).unwrap().max_abs() <= 1e-7);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let indefinite = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(PsdMatrix::new(indefinite), Err(Error::NotPsd)));
        let asym = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(PsdMatrix::new(asym), Err(Error::NotPsd)));
        assert!(matches!(PsdMatrix::from_diagonal(&[1.0, -1.0]), Err(Error::NotPsd)));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn gemm_variants_agree_with_naive() {
        let mut rng = SeededRng::new(5);
        let a = random_matrix(4, 3, &mut rng);
        let b = random_matrix(3, 5, &mut rng);
        let naive = |x: &Matrix, y: &Matrix| {
            let mut out = Matrix::zeros(x.rows(), y.cols());
            for i in 0..x.rows() {
                for j in 0..y.cols() {
                    out[(i, j)] = (0..x.cols()).map(|k| x[(i, k)] * y[(k, j)]).sum();
                }
            }
            out
        };
        let ab = naive(&a, &b);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&ab) < 1e-12);
        assert!(a.matmul_t(&b.transpose()).unwrap().max_abs_diff(&ab) < 1e-12);
        assert!(a.transpose().t_matmul(&b).unwrap().max_abs_diff(&ab) < 1e-12);
        let x = [1.0, -2.0, 0.5];
        let ax = a.matvec(&x).unwrap();
        let col = naive(&a, &Matrix::column_vector(&x));
        for (i, v) in ax.iter().enumerate() {
            assert!((v - col[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn congruence_diagonal_fast_path_matches_dense() {
        let mut rng = SeededRng::new(9);
        let a = random_matrix(3, 4, &mut rng);
        let d = [0.5, 2.0, 0.0, 1.5];
        let fast = PsdMatrix::from_diagonal(&d).unwrap().congruence(&a).unwrap();
        let dense = a.matmul(&Matrix::from_diag(&d)).unwrap().matmul_t(&a).unwrap();
        assert!(fast.matrix().max_abs_diff(&dense) < 1e-12);
    }
}
