use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::LinalgError;

/// Row-major dense real matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input; meant for literals in code and tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
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

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// `self * other`; panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add_identity(&mut self, s: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest singular value by power iteration on `AᵀA`.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let mut v = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut sigma = 0.0;
        for _ in 0..500 {
            let av = self.matvec(&v);
            let mut atav = vec![0.0; self.cols];
            for r in 0..self.rows {
                let row = self.row(r);
                for c in 0..self.cols {
                    atav[c] += row[c] * av[r];
                }
            }
            let n = atav.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                return 0.0;
            }
            let next = n.sqrt();
            for (vi, w) in v.iter_mut().zip(&atav) {
                *vi = w / n;
            }
            if (next - sigma).abs() <= 1e-13 * next {
                return next;
            }
            sigma = next;
        }
        sigma
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `out = alpha * op(a) * op(b) + beta * out` where `op` optionally transposes.
pub fn gemm(
    alpha: f64,
    a: &DenseMatrix,
    trans_a: bool,
    b: &DenseMatrix,
    trans_b: bool,
    beta: f64,
    out: &mut DenseMatrix,
) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "gemm inner dimension mismatch");
    assert_eq!((out.rows, out.cols), (m, n), "gemm output shape mismatch");
    gemm_raw(
        m,
        k,
        n,
        alpha,
        &a.data,
        trans_a,
        a.cols,
        &b.data,
        trans_b,
        b.cols,
        beta,
        &mut out.data,
    );
}

/// Strided gemm over raw row-major buffers. `lda`/`ldb` are the stored row lengths.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_raw(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    lda: usize,
    b: &[f64],
    trans_b: bool,
    ldb: usize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, lda as isize) } else { (lda as isize, 1) };
    let (rsb, csb) = if trans_b { (1, ldb as isize) } else { (ldb as isize, 1) };
    assert!(a.len() >= if trans_a { k * lda } else { m * lda });
    assert!(b.len() >= if trans_b { n * ldb } else { k * ldb });
    // SAFETY: the asserts above bound every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// LU factorisation with partial pivoting.
pub struct Lu {
    n: usize,
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::Dimension(format!("LU needs a square matrix, got {}x{}", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, lu[(r, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(LinalgError::Singular);
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let d = lu[(k, k)];
            for r in k + 1..n {
                let f = lu[(r, k)] / d;
                lu[(r, k)] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu.data[r * n + c] -= f * lu.data[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        assert_eq!(b.rows, n);
        let m = b.cols;
        let mut x = DenseMatrix::zeros(n, m);
        for r in 0..n {
            x.data[r * m..(r + 1) * m].copy_from_slice(b.row(self.perm[r]));
        }
        for r in 0..n {
            for k in 0..r {
                let f = self.lu[(r, k)];
                if f != 0.0 {
                    for c in 0..m {
                        x.data[r * m + c] -= f * x.data[k * m + c];
                    }
                }
            }
        }
        for r in (0..n).rev() {
            for k in r + 1..n {
                let f = self.lu[(r, k)];
                if f != 0.0 {
                    for c in 0..m {
                        x.data[r * m + c] -= f * x.data[k * m + c];
                    }
                }
            }
            let d = self.lu[(r, r)];
            for c in 0..m {
                x.data[r * m + c] /= d;
            }
        }
        x
    }

    /// Solves `Aᵀ X = B`.
    pub fn solve_transpose(&self, b: &DenseMatrix) -> DenseMatrix {
        // PA = LU  =>  Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ y = b, Lᵀ w = y, x = Pᵀ w.
        let n = self.n;
        assert_eq!(b.rows, n);
        let m = b.cols;
        let mut y = b.clone();
        for r in 0..n {
            for k in 0..r {
                let f = self.lu[(k, r)];
                if f != 0.0 {
                    for c in 0..m {
                        y.data[r * m + c] -= f * y.data[k * m + c];
                    }
                }
            }
            let d = self.lu[(r, r)];
            for c in 0..m {
                y.data[r * m + c] /= d;
            }
        }
        for r in (0..n).rev() {
            for k in r + 1..n {
                let f = self.lu[(k, r)];
                if f != 0.0 {
                    for c in 0..m {
                        y.data[r * m + c] -= f * y.data[k * m + c];
                    }
                }
            }
        }
        let mut x = DenseMatrix::zeros(n, m);
        for r in 0..n {
            x.data[self.perm[r] * m..(self.perm[r] + 1) * m].copy_from_slice(y.row(r));
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_and_transposed_solves() {
        let a = DenseMatrix::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, -1.0, 3.0], &[4.0, 0.5, -2.0]]);
        let b = DenseMatrix::from_rows(&[&[1.0, 0.0], &[2.0, 1.0], &[3.0, -1.0]]);
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&b);
        let back = a.matmul(&x);
        for (u, v) in back.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-13);
        }
        let xt = lu.solve_transpose(&b);
        let back = a.transpose().matmul(&xt);
        for (u, v) in back.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(Lu::factor(&a), Err(LinalgError::Singular)));
    }

    #[test]
    fn transposed_gemm_matches_explicit_transpose() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = DenseMatrix::from_rows(&[&[1.0, -1.0], &[0.5, 2.0]]);
        let mut out = DenseMatrix::zeros(3, 2);
        gemm(1.0, &a, true, &b, false, 0.0, &mut out);
        assert_eq!(out, a.transpose().matmul(&b));
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = DenseMatrix::from_diag(&[3.0, -5.0, 1.0]);
        assert!((a.spectral_norm() - 5.0).abs() < 1e-10);
    }
}
