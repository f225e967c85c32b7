//! Dense linear algebra for small symmetric systems.
//!
//! Everything targets the low-dimensional regime (d ≤ 64) the model lives in:
//! Cholesky factorization with a fixed pivot tolerance, inverses of principal
//! submatrices, Schur complements, and a cyclic Jacobi eigensolver used by the
//! positive-semidefinite projection. Matrices are dense row-major `f64`.

use crate::error::{Error, Result};

/// Hard cap on model dimension.
pub const MAX_DIM: usize = 64;

/// Cholesky pivot tolerance: factorization fails when a pivot is ≤ this.
pub const PD_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: n,
            cols,
            data,
        })
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// y = M x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Principal submatrix picking the given row/column indices, in order.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Matrix {
        self.submatrix(idx, idx)
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut s = Matrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                s.set(a, b, self.get(i, j));
            }
        }
        s
    }

    pub fn is_symmetric_exact(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if self.get(i, j) != self.get(j, i) {
                    return false;
                }
            }
        }
        true
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Fails with `NotPositiveDefinite` when any pivot is ≤ [`PD_PIVOT_TOL`].
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    assert_eq!(m.rows(), m.cols(), "cholesky needs a square matrix");
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m.get(j, j);
        for k in 0..j {
            pivot -= l.get(j, k) * l.get(j, k);
        }
        if !(pivot > PD_PIVOT_TOL) {
            return Err(Error::NotPositiveDefinite);
        }
        let ljj = pivot.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solve M x = b given the lower Cholesky factor L of M.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    // forward: L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    // backward: L^T x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn inverse_spd(m: &Matrix) -> Result<Matrix> {
    let n = m.rows();
    let l = cholesky(m)?;
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        e[j] = 0.0;
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    Ok(inv)
}

/// Determinant of a symmetric positive definite matrix (product of squared
/// Cholesky pivots).
pub fn determinant_spd(m: &Matrix) -> Result<f64> {
    let l = cholesky(m)?;
    let mut det = 1.0;
    for i in 0..l.rows() {
        det *= l.get(i, i) * l.get(i, i);
    }
    Ok(det)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted) and the orthogonal matrix of eigenvectors
/// stored as columns, with `m = V diag(w) V^T`.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !m.is_symmetric_exact() {
        return Err(Error::DimensionMismatch(
            "eigendecomposition needs a symmetric matrix".into(),
        ));
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let scale: f64 = (0..n)
        .map(|i| a.get(i, i).abs())
        .fold(1e-300, f64::max);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a.get(i, j).abs());
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                // smaller-angle rotation root
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let w = (0..n).map(|i| a.get(i, i)).collect();
    Ok((w, v))
}

/// Correlation matrix: symmetric with unit diagonal, off-diagonal entries in
/// (−1, 1), and positive definite under the [`PD_PIVOT_TOL`] pivot tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Matrix,
}

impl CorrelationMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.rows() != entries.cols() {
            return Err(Error::DimensionMismatch(format!(
                "correlation matrix must be square, got {}x{}",
                entries.rows(),
                entries.cols()
            )));
        }
        let dim = entries.rows();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::DimensionMismatch(format!(
                "dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        if !entries.is_symmetric_exact() {
            return Err(Error::Domain("correlation matrix is not symmetric".into()));
        }
        for i in 0..dim {
            if entries.get(i, i) != 1.0 {
                return Err(Error::Domain(format!(
                    "diagonal entry ({i},{i}) is {}, expected exactly 1",
                    entries.get(i, i)
                )));
            }
            for j in (i + 1)..dim {
                if !entries.get(i, j).is_finite() {
                    return Err(Error::Domain(format!(
                        "off-diagonal entry ({i},{j}) is not finite"
                    )));
                }
            }
        }
        // positive definiteness; a unit-diagonal PD matrix automatically has
        // off-diagonal entries inside (-1, 1), so |ρ| >= 1 fails here
        cholesky(&entries)?;
        Ok(CorrelationMatrix { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        CorrelationMatrix::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        CorrelationMatrix::new(Matrix::identity(dim))
    }

    /// 2×2 matrix with a single correlation parameter.
    pub fn from_rho(rho: f64) -> Result<Self> {
        CorrelationMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn cholesky(&self) -> Result<Matrix> {
        cholesky(&self.entries)
    }

    /// Inverse of the principal submatrix Σ_idx.
    pub fn submatrix_inverse(&self, idx: &[usize]) -> Result<Matrix> {
        if idx.is_empty() {
            return Err(Error::DimensionMismatch("empty index set".into()));
        }
        if idx.iter().any(|&i| i >= self.dim) {
            return Err(Error::DimensionMismatch("index out of range".into()));
        }
        inverse_spd(&self.entries.principal_submatrix(idx))
    }

    /// Consistently permuted correlation matrix (entry (i,j) of the result is
    /// entry (perm[i], perm[j]) of self).
    pub fn permuted(&self, perm: &[usize]) -> Result<CorrelationMatrix> {
        assert_eq!(perm.len(), self.dim);
        let mut m = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.set(i, j, self.entry(perm[i], perm[j]));
            }
        }
        CorrelationMatrix::new(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    fn random_pd_correlation(d: usize, stream: &mut RandomStream) -> CorrelationMatrix {
        // random Gram matrix, rescaled to unit diagonal
        let mut g = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                g.set(i, j, stream.next_std_normal());
            }
        }
        let mut s = g.matmul(&g.transpose());
        for i in 0..d {
            let v = s.get(i, i) + 0.05 * d as f64;
            s.set(i, i, v);
        }
        let sd: Vec<f64> = (0..d).map(|i| s.get(i, i).sqrt()).collect();
        let mut c = Matrix::identity(d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    c.set(i, j, s.get(i, j) / (sd[i] * sd[j]));
                }
            }
        }
        // enforce exact symmetry after rounding
        for i in 0..d {
            for j in (i + 1)..d {
                let v = c.get(i, j);
                c.set(j, i, v);
            }
        }
        CorrelationMatrix::new(c).expect("random Gram correlation should be PD")
    }

    #[test]
    fn cholesky_identity_is_identity() {
        let m = Matrix::identity(3);
        let l = cholesky(&m).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_two_dim_hand_value() {
        let m = CorrelationMatrix::from_rho(0.8).unwrap();
        let l = m.cholesky().unwrap();
        assert_eq!(l.get(0, 0), 1.0);
        assert_eq!(l.get(0, 1), 0.0);
        assert_eq!(l.get(1, 0), 0.8);
        // 0.6 = sqrt(1 - 0.64)
        assert!((l.get(1, 1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn degenerate_correlation_rejected() {
        assert!(matches!(
            CorrelationMatrix::from_rho(1.0),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(matches!(
            CorrelationMatrix::from_rho(1.4),
            Err(Error::NotPositiveDefinite)
        ));
        // inside (-1,1) but singular via 3x3
        let m = Matrix::from_rows(&[
            vec![1.0, 0.999999999, 0.999999999],
            vec![0.999999999, 1.0, 0.999999999],
            vec![0.999999999, 0.999999999, 1.0],
        ])
        .unwrap();
        // still PD (barely); pivot tolerance decides
        let r = CorrelationMatrix::new(m);
        assert!(r.is_ok() || matches!(r, Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn asymmetric_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.2999999999, 1.0]]).unwrap();
        assert!(matches!(
            CorrelationMatrix::new(m),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn cholesky_reconstructs_random_pd() {
        let mut stream = RandomStream::new(7, 0);
        for trial in 0..1000 {
            let d = 2 + (trial % 7);
            let c = random_pd_correlation(d, &mut stream);
            let l = c.cholesky().unwrap();
            let rec = l.matmul(&l.transpose());
            assert!(
                rec.max_abs_diff(c.entries()) <= 1e-12,
                "reconstruction residual too large at trial {trial}"
            );
        }
    }

    #[test]
    fn submatrix_inverse_identity_cases() {
        let c = CorrelationMatrix::identity(2).unwrap();
        let inv = c.submatrix_inverse(&[0, 1]).unwrap();
        assert!(inv.max_abs_diff(&Matrix::identity(2)) < 1e-15);

        let c = CorrelationMatrix::from_rho(0.5).unwrap();
        let inv = c.submatrix_inverse(&[0]).unwrap();
        assert!((inv.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn submatrix_inverse_multiply_back() {
        let mut stream = RandomStream::new(11, 0);
        for _ in 0..50 {
            let c = random_pd_correlation(3, &mut stream);
            for idx in [vec![0usize], vec![1, 2], vec![0, 1, 2], vec![0, 2]] {
                let inv = c.submatrix_inverse(&idx).unwrap();
                let sub = c.entries().principal_submatrix(&idx);
                let prod = inv.matmul(&sub);
                assert!(
                    prod.max_abs_diff(&Matrix::identity(idx.len())) <= 1e-10,
                    "residual check failed for idx {idx:?}"
                );
            }
        }
    }

    #[test]
    fn jacobi_eigen_reconstructs() {
        let mut stream = RandomStream::new(13, 0);
        for _ in 0..50 {
            let c = random_pd_correlation(5, &mut stream);
            let (w, v) = symmetric_eigen(c.entries()).unwrap();
            let mut d = Matrix::zeros(5, 5);
            for i in 0..5 {
                d.set(i, i, w[i]);
            }
            let rec = v.matmul(&d).matmul(&v.transpose());
            assert!(rec.max_abs_diff(c.entries()) < 1e-10);
            // PD input: all eigenvalues positive
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }
}
