//! Dense matrix numerics shared by every decomposition in the crate.
//!
//! Matrices are small (tens of columns, a few thousand rows at most), so the
//! routines here favour robustness over asymptotic speed: the only iterative
//! kernel is a cyclic Jacobi eigensolver, and the SVD is derived from it.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Off-diagonal threshold for the Jacobi sweeps, relative to the Frobenius norm.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("eigensolver did not converge after {0} sweeps")]
    DidNotConverge(usize),
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let n = rows.len();
        let m = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            let r = r.as_ref();
            if r.len() != m {
                return Err(LinalgError::ShapeMismatch(format!(
                    "ragged rows: expected {m} columns, found {}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, m, data)
    }

    /// Builds a matrix whose columns are the given slices.
    pub fn from_columns<C: AsRef<[f64]>>(cols: &[C]) -> Result<Self, LinalgError> {
        let m = cols.len();
        let n = cols.first().map(|c| c.as_ref().len()).unwrap_or(0);
        if cols.iter().any(|c| c.as_ref().len() != n) {
            return Err(LinalgError::ShapeMismatch("ragged columns".into()));
        }
        let mut out = Self::new(n, m, vec![0.0; n * m])?;
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.as_ref().iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, a) in a_row.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.rows != other.rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, a) in a_row.iter().enumerate() {
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Keeps the first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Matrix {
        assert!(n >= 1 && n <= self.cols);
        let mut out = Matrix::zeros(self.rows, n);
        for i in 0..self.rows {
            out.data[i * n..(i + 1) * n].copy_from_slice(&self.row(i)[..n]);
        }
        out
    }

    /// Keeps the first `n` rows.
    pub fn leading_rows(&self, n: usize) -> Matrix {
        assert!(n >= 1 && n <= self.rows);
        Matrix {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Sample standard deviations (n−1 denominator).
    pub fn column_stdevs(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut ss = vec![0.0; self.cols];
        for i in 0..self.rows {
            for ((s, v), m) in ss.iter_mut().zip(self.row(i)).zip(&means) {
                let d = v - m;
                *s += d * d;
            }
        }
        let denom = (self.rows as f64 - 1.0).max(1.0);
        ss.into_iter().map(|s| (s / denom).sqrt()).collect()
    }

    /// Symmetry check with an absolute tolerance.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
///
/// Column `i` of `vectors` pairs with `values[i]`. Each eigenvector is signed
/// so that its largest-magnitude entry is positive (lowest index wins ties).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Thin SVD, `x = u · diag(sigma) · vᵀ`, singular values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdDecomposition {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("svd factors are conformable")
    }
}

/// Centers and/or scales each column.
///
/// Scaling divides by the sample standard deviation (n−1 denominator).
pub fn center_scale(x: &Matrix, center: bool, scale: bool) -> Result<Matrix, LinalgError> {
    if x.rows() < 2 {
        return Err(LinalgError::TooFewRows(x.rows()));
    }
    let means = x.column_means();
    let sds = x.column_stdevs();
    if scale {
        if let Some(j) = sds.iter().position(|s| *s == 0.0 || !s.is_finite()) {
            return Err(LinalgError::ZeroVarianceColumn(j));
        }
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            let v = &mut out[(i, j)];
            if center {
                *v -= means[j];
            }
            if scale {
                // dividing an uncentered column still yields unit sample sd
                *v /= sds[j];
            }
        }
    }
    Ok(out)
}

/// Sample covariance matrix (n−1 denominator), centering internally.
pub fn covariance_matrix(x: &Matrix) -> Result<Matrix, LinalgError> {
    if x.rows() < 2 {
        return Err(LinalgError::TooFewRows(x.rows()));
    }
    let xc = center_scale(x, true, false)?;
    let mut cov = xc.t_matmul(&xc)?;
    let denom = x.rows() as f64 - 1.0;
    let p = cov.cols();
    for i in 0..p {
        for j in i..p {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Pearson correlation matrix with an exact unit diagonal.
pub fn correlation_matrix(x: &Matrix) -> Result<Matrix, LinalgError> {
    let cov = covariance_matrix(x)?;
    let p = cov.cols();
    let sd: Vec<f64> = cov.diag().iter().map(|v| v.sqrt()).collect();
    if let Some(j) = sd.iter().position(|s| *s == 0.0) {
        return Err(LinalgError::ZeroVarianceColumn(j));
    }
    let mut r = cov;
    for i in 0..p {
        for j in 0..p {
            r[(i, j)] = if i == j {
                1.0
            } else {
                (r[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
            };
        }
    }
    Ok(r)
}

/// Symmetric eigendecomposition by the cyclic Jacobi method.
pub fn sym_eigen(s: &Matrix) -> Result<EigenDecomposition, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::NotSquare(s.rows(), s.cols()));
    }
    if !s.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let scale = s.max_abs().max(1.0);
    if !s.is_symmetric(1e-10 * scale) {
        return Err(LinalgError::NotSymmetric);
    }
    let n = s.rows();
    // work on the exactly symmetrised copy
    let mut a = s.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = Matrix::identity(n);
    let norm = a.frobenius();
    let threshold = JACOBI_TOL * norm;

    let mut converged = n == 1;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate(&mut a, &mut v, p, q, c, sn, t);
            }
        }
    }
    if !converged {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
        }
    }
    if !converged {
        return Err(LinalgError::DidNotConverge(JACOBI_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag = a.diag();
    // stable sort keeps ties in index order, so repeated runs agree bit-for-bit
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, dst)] = v[(i, src)];
        }
    }
    normalize_signs(&mut vectors);
    Ok(EigenDecomposition { values, vectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

#[allow(clippy::too_many_arguments)]
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let n = a.rows();
    let apq = a[(p, q)];
    let tau = s / (1.0 + c);
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        let new_rp = arp - s * (arq + tau * arp);
        let new_rq = arq + s * (arp - tau * arq);
        a[(r, p)] = new_rp;
        a[(p, r)] = new_rp;
        a[(r, q)] = new_rq;
        a[(q, r)] = new_rq;
    }
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = vrp - s * (vrq + tau * vrp);
        v[(r, q)] = vrq + s * (vrp - tau * vrq);
    }
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn normalize_signs(m: &mut Matrix) {
    for j in 0..m.cols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..m.rows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            for i in 0..m.rows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Thin SVD through the eigendecomposition of the smaller Gram matrix.
pub fn svd(x: &Matrix) -> Result<SvdDecomposition, LinalgError> {
    if !x.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if x.rows() < x.cols() {
        let t = svd(&x.transpose())?;
        return Ok(SvdDecomposition {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let (n, m) = x.shape();
    let gram = x.t_matmul(x)?;
    let eig = sym_eigen(&gram)?;
    let xv = x.matmul(&eig.vectors)?;

    // singular values from ‖X vᵢ‖ are more accurate than √λᵢ for small σ
    let mut sigma: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| xv[(i, j)] * xv[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).expect("finite"));
    sigma = order.iter().map(|&j| sigma[j]).collect();

    let mut v = Matrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..m {
            v[(i, dst)] = eig.vectors[(i, src)];
        }
    }

    let smax = sigma[0];
    let cutoff = smax * 1e-13;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (dst, &src) in order.iter().enumerate() {
        if sigma[dst] > cutoff && sigma[dst] > 0.0 {
            u_cols.push((0..n).map(|i| xv[(i, src)] / sigma[dst]).collect());
        } else {
            u_cols.push(Vec::new());
        }
    }
    complete_basis(&mut u_cols, n);
    let u = Matrix::from_columns(&u_cols)?;
    Ok(SvdDecomposition { u, sigma, v })
}

/// Fills empty columns with unit vectors orthogonal to the existing ones.
fn complete_basis(cols: &mut [Vec<f64>], n: usize) {
    let mut candidate = 0usize;
    for j in 0..cols.len() {
        if !cols[j].is_empty() {
            continue;
        }
        loop {
            assert!(candidate < n, "cannot complete an orthonormal basis");
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt for numerical orthogonality
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let d: f64 = e.iter().zip(other).map(|(a, b)| a * b).sum();
                    e.iter_mut().zip(other).for_each(|(a, b)| *a -= d * b);
                }
            }
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                e.iter_mut().for_each(|v| *v /= norm);
                cols[j] = e;
                break;
            }
        }
    }
}

/// Moore-Penrose pseudo-inverse; singular values below `rcond·σ₁` are dropped.
pub fn pinv(x: &Matrix, rcond: f64) -> Result<Matrix, LinalgError> {
    let d = svd(x)?;
    let cutoff = rcond * d.sigma[0];
    let k = d.sigma.len();
    let mut vs = d.v.clone();
    for i in 0..vs.rows() {
        for j in 0..k {
            let s = d.sigma[j];
            vs[(i, j)] = if s > cutoff && s > 0.0 { vs[(i, j)] / s } else { 0.0 };
        }
    }
    vs.matmul(&d.u.transpose())
}

/// Inverse of a symmetric positive-definite matrix via its eigendecomposition.
pub fn spd_inverse(s: &Matrix) -> Result<Matrix, LinalgError> {
    let eig = sym_eigen(s)?;
    let n = s.rows();
    let mut vd = eig.vectors.clone();
    for i in 0..n {
        for j in 0..n {
            vd[(i, j)] /= eig.values[j];
        }
    }
    vd.matmul(&eig.vectors.transpose())
}

/// Log-determinant of a symmetric positive-definite matrix; `None` if not PD.
pub fn spd_log_det(s: &Matrix) -> Result<Option<f64>, LinalgError> {
    let eig = sym_eigen(s)?;
    if eig.values.iter().any(|v| *v <= 0.0) {
        return Ok(None);
    }
    Ok(Some(eig.values.iter().map(|v| v.ln()).sum()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let a = random(n, n, seed);
        a.add(&a.transpose()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(Matrix::new(0, 2, vec![]), Err(LinalgError::Empty));
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0]),
            Err(LinalgError::DataLength { .. })
        ));
    }

    #[test]
    fn center_only() {
        let x = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let c = center_scale(&x, true, false).unwrap();
        assert_eq!(c.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn center_and_scale() {
        let x = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let c = center_scale(&x, true, true).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[(0, 0)] + h).abs() < 1e-15);
        assert!((c[(1, 0)] - h).abs() < 1e-15);
    }

    #[test]
    fn scale_constant_column_fails() {
        let x = Matrix::from_rows(&[[5.0], [5.0]]).unwrap();
        assert_eq!(
            center_scale(&x, true, true),
            Err(LinalgError::ZeroVarianceColumn(0))
        );
    }

    #[test]
    fn center_scale_moments() {
        let x = random(30, 4, 3).map(|v| 10.0 * v + 4.0);
        let z = center_scale(&x, true, true).unwrap();
        for m in z.column_means() {
            assert!(m.abs() < 1e-12);
        }
        for s in z.column_stdevs() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_identical_columns() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let c = covariance_matrix(&x).unwrap();
        assert_eq!(c.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn covariance_constant_column_is_zero() {
        let x = Matrix::from_rows(&[[1.0, 7.0], [2.0, 7.0], [4.0, 7.0]]).unwrap();
        let c = covariance_matrix(&x).unwrap();
        assert_eq!(c[(1, 1)], 0.0);
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(c[(1, 0)], 0.0);
    }

    #[test]
    fn covariance_needs_two_rows() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(covariance_matrix(&x), Err(LinalgError::TooFewRows(1)));
    }

    #[test]
    fn covariance_matches_direct_summation() {
        let x = random(5, 3, 11);
        let c = covariance_matrix(&x).unwrap();
        // brute-force double loop over the definition
        let n = x.rows();
        for i in 0..3 {
            for j in 0..3 {
                let mi: f64 = (0..n).map(|k| x[(k, i)]).sum::<f64>() / n as f64;
                let mj: f64 = (0..n).map(|k| x[(k, j)]).sum::<f64>() / n as f64;
                let mut s = 0.0;
                for k in 0..n {
                    s += (x[(k, i)] - mi) * (x[(k, j)] - mj);
                }
                assert!((c[(i, j)] - s / (n as f64 - 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_examples() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [4.0, 4.0]]).unwrap();
        assert!((correlation_matrix(&x).unwrap()[(0, 1)] - 1.0).abs() < 1e-12);
        let x = Matrix::from_rows(&[[1.0, -1.0], [2.0, -2.0], [3.0, -3.0]]).unwrap();
        assert!((correlation_matrix(&x).unwrap()[(0, 1)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_equals_covariance_of_standardized() {
        let x = random(6, 4, 5);
        let r = correlation_matrix(&x).unwrap();
        let c = covariance_matrix(&center_scale(&x, true, true).unwrap()).unwrap();
        assert!(r.sub(&c).unwrap().max_abs() < 1e-12);
        for i in 0..4 {
            assert_eq!(r[(i, i)], 1.0);
        }
    }

    #[test]
    fn eigen_identity_and_diag() {
        let e = sym_eigen(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let e = sym_eigen(&Matrix::from_diag(&[1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![2.0, 1.0]);
        assert_eq!(e.vectors.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let s = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert_eq!(sym_eigen(&s), Err(LinalgError::NotSymmetric));
    }

    #[test]
    fn eigen_residual_and_trace() {
        let s = random_symmetric(8, 21);
        let e = sym_eigen(&s).unwrap();
        let tol = 1e-8 * s.max_abs().max(1.0);
        for i in 0..8 {
            let v = e.vectors.column(i);
            for r in 0..8 {
                let sv: f64 = (0..8).map(|c| s[(r, c)] * v[c]).sum();
                assert!((sv - e.values[i] * v[r]).abs() <= tol);
            }
        }
        let vtv = e.vectors.t_matmul(&e.vectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(8)).unwrap().max_abs() < 1e-10);
        assert!((e.values.iter().sum::<f64>() - s.trace()).abs() < 1e-8);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigen_degenerate_subspace() {
        // eigenvalue 3 has a 2-d eigenspace spanned by e0, e1
        let s = Matrix::from_diag(&[3.0, 3.0, 1.0]);
        let e = sym_eigen(&s).unwrap();
        for j in 0..2 {
            assert!(e.vectors[(2, j)].abs() < 1e-12);
        }
    }

    #[test]
    fn svd_examples() {
        let d = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(d.sigma, vec![1.0, 1.0]);
        let d = svd(&Matrix::from_rows(&[[3.0, 0.0], [0.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(d.sigma, vec![3.0, 0.0]);
        assert!(d.reconstruct().sub(&Matrix::from_rows(&[[3.0, 0.0], [0.0, 0.0]]).unwrap()).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn svd_cross_checks_gram_eigenvalues() {
        let x = random(6, 3, 8);
        let d = svd(&x).unwrap();
        let e = sym_eigen(&x.t_matmul(&x).unwrap()).unwrap();
        for (s, l) in d.sigma.iter().zip(&e.values) {
            assert!((s * s - l).abs() <= 1e-8 * e.values[0]);
        }
        assert!(d.reconstruct().sub(&x).unwrap().max_abs() < 1e-8);
        let utu = d.u.t_matmul(&d.u).unwrap();
        assert!(utu.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn svd_wide_and_rank_deficient() {
        let x = random(3, 7, 2);
        let d = svd(&x).unwrap();
        assert_eq!(d.u.shape(), (3, 3));
        assert_eq!(d.v.shape(), (7, 3));
        assert!(d.reconstruct().sub(&x).unwrap().max_abs() < 1e-8);

        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let d = svd(&x).unwrap();
        assert!(d.sigma[1] < 1e-12 * d.sigma[0]);
        let utu = d.u.t_matmul(&d.u).unwrap();
        assert!(utu.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let ai = pinv(&a, 1e-12).unwrap();
        let p = a.matmul(&ai).unwrap();
        assert!(p.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-12);
    }
}
