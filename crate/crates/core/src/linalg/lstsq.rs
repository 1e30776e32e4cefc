use serde::{Deserialize, Serialize};

use super::{DenseMatrix, LinalgError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub rank: usize,
    /// Set when the numerical rank is below the column count; the minimum-norm
    /// solution is returned in that case.
    pub rank_deficient: bool,
}

/// Applies the reflector `I - beta v v^T` (v supported on `k..`) to column `j` of `a`.
fn reflect_col(a: &mut DenseMatrix, v: &[f64], beta: f64, k: usize, j: usize) {
    let m = a.rows();
    let s: f64 = (k..m).map(|i| v[i] * a[(i, j)]).sum::<f64>() * beta;
    for i in k..m {
        a[(i, j)] -= s * v[i];
    }
}

/// Householder vector for column `k` of `a` below row `k`; returns (v, beta, alpha).
fn householder(a: &DenseMatrix, k: usize, col: usize) -> (Vec<f64>, f64, f64) {
    let m = a.rows();
    let norm = (k..m).map(|i| a[(i, col)] * a[(i, col)]).sum::<f64>().sqrt();
    let mut v = vec![0.0; m];
    if norm == 0.0 {
        return (v, 0.0, 0.0);
    }
    let alpha = if a[(k, col)] > 0.0 { -norm } else { norm };
    for i in k..m {
        v[i] = a[(i, col)];
    }
    v[k] -= alpha;
    let vn: f64 = (k..m).map(|i| v[i] * v[i]).sum();
    let beta = if vn == 0.0 { 0.0 } else { 2.0 / vn };
    (v, beta, alpha)
}

/// Minimises `|Theta c - y|_2` by Householder QR with column pivoting.
/// Columns whose pivot falls below `1e-10 |Theta|_F` are treated as dependent.
pub fn least_squares(theta: &DenseMatrix, y: &[f64]) -> Result<LeastSquaresFit, LinalgError> {
    let (m, n) = (theta.rows(), theta.cols());
    if m < n || n == 0 {
        return Err(LinalgError::Dimension(format!("least squares needs rows >= cols > 0, got {m}x{n}")));
    }
    if y.len() != m {
        return Err(LinalgError::Dimension(format!("{} targets for {m} rows", y.len())));
    }
    if !theta.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::Domain("least squares input has non-finite entries".into()));
    }

    let tol = 1e-10 * theta.norm_fro();
    let mut a = theta.clone();
    let mut b = DenseMatrix::from_vec(m, 1, y.to_vec())?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = n;
    for k in 0..n {
        let norms: Vec<f64> = (k..n).map(|j| (k..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>()).collect();
        let (best, _) = norms
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let p = k + best;
        if p != k {
            for i in 0..m {
                let tmp = a[(i, k)];
                a[(i, k)] = a[(i, p)];
                a[(i, p)] = tmp;
            }
            perm.swap(k, p);
        }
        let (v, beta, alpha) = householder(&a, k, k);
        if alpha.abs() <= tol {
            rank = k;
            break;
        }
        for j in k + 1..n {
            reflect_col(&mut a, &v, beta, k, j);
        }
        reflect_col(&mut b, &v, beta, k, 0);
        a[(k, k)] = alpha;
        for i in k + 1..m {
            a[(i, k)] = 0.0;
        }
    }

    let mut c_perm = vec![0.0; n];
    if rank == n {
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[(k, j)] * c_perm[j]).sum();
            c_perm[k] = (b[(k, 0)] - s) / a[(k, k)];
        }
    } else if rank > 0 {
        // Minimum-norm solution of [R11 R12] c = b: QR of the transpose,
        // then R2^T w = b and c = Q2 w.
        let mut mt = DenseMatrix::zeros(n, rank);
        for i in 0..rank {
            for j in i..n {
                mt[(j, i)] = a[(i, j)];
            }
        }
        let mut reflectors = Vec::with_capacity(rank);
        for k in 0..rank {
            let (v, beta, alpha) = householder(&mt, k, k);
            for j in k + 1..rank {
                reflect_col(&mut mt, &v, beta, k, j);
            }
            mt[(k, k)] = alpha;
            reflectors.push((v, beta));
        }
        let mut w = DenseMatrix::zeros(n, 1);
        for k in 0..rank {
            let s: f64 = (0..k).map(|j| mt[(j, k)] * w[(j, 0)]).sum();
            w[(k, 0)] = (b[(k, 0)] - s) / mt[(k, k)];
        }
        for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
            reflect_col(&mut w, v, *beta, k, 0);
        }
        for (i, c) in c_perm.iter_mut().enumerate() {
            *c = w[(i, 0)];
        }
    }
    let mut coefficients = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        coefficients[p] = c_perm[k];
    }

    let fitted = theta.matvec(&coefficients);
    let ss_res: f64 = fitted.iter().zip(y).map(|(f, t)| (t - f) * (t - f)).sum();
    let mean = y.iter().sum::<f64>() / m as f64;
    let ss_tot: f64 = y.iter().map(|t| (t - mean) * (t - mean)).sum();
    let scale: f64 = y.iter().map(|t| t * t).sum::<f64>().max(f64::MIN_POSITIVE);
    let r_squared = if ss_tot > 1e-30 * scale {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 * scale {
        1.0
    } else {
        0.0
    };
    Ok(LeastSquaresFit { coefficients, r_squared, rank, rank_deficient: rank < n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let fit = least_squares(&DenseMatrix::identity(2), &[3.0, -2.0]).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-15);
        assert!((fit.coefficients[1] + 2.0).abs() < 1e-15);
        assert_eq!(fit.r_squared, 1.0);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn target_in_span_fits_exactly() {
        let theta = DenseMatrix::from_rows(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0], &[1.0, 3.0]]);
        let y = [1.0, 3.0, 5.0, 7.0];
        let fit = least_squares(&theta, &y).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_gives_minimum_norm() {
        let theta = DenseMatrix::from_rows(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]);
        let fit = least_squares(&theta, &[2.0, 4.0, 6.0]).unwrap();
        assert!(fit.rank_deficient);
        assert_eq!(fit.rank, 1);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(least_squares(&DenseMatrix::zeros(1, 2), &[1.0]).is_err());
        assert!(least_squares(&DenseMatrix::identity(2), &[1.0]).is_err());
    }
}
