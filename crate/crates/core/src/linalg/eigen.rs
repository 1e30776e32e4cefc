use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{require_square_finite, DenseMatrix, LinalgError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    /// Sorted by descending real part, then descending imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub spectral_abscissa: f64,
}

impl EigenSpectrum {
    fn from_values(mut eigenvalues: Vec<Complex64>) -> Self {
        eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        let spectral_abscissa = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        Self { eigenvalues, spectral_abscissa }
    }
}

/// Eigenvalues by balancing, Householder reduction to Hessenberg form and
/// Francis double-shift QR. At most `100 n` QR sweeps are performed in total.
pub fn eigenvalues(a: &DenseMatrix) -> Result<EigenSpectrum, LinalgError> {
    require_square_finite(a, "eigenvalues")?;
    let n = a.rows();
    if n == 0 {
        return Ok(EigenSpectrum { eigenvalues: Vec::new(), spectral_abscissa: f64::NEG_INFINITY });
    }
    let mut h: Vec<Vec<f64>> = (0..n).map(|r| a.row(r).to_vec()).collect();
    balance(&mut h);
    hessenberg(&mut h);
    let vals = hqr(&mut h, 100 * n)?;
    Ok(EigenSpectrum::from_values(vals))
}

fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let n = a.len();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for v in a[i].iter_mut() {
                    *v *= g;
                }
                for row in a.iter_mut() {
                    row[i] *= f;
                }
            }
        }
    }
}

fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let norm = (k + 1..n).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k + 1][k] > 0.0 { -norm } else { norm };
        for i in k + 1..n {
            v[i] = a[i][k];
        }
        v[k + 1] -= alpha;
        let vnorm2: f64 = (k + 1..n).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // Left: A <- (I - beta v v^T) A on rows k+1..n.
        for j in k..n {
            let s: f64 = (k + 1..n).map(|i| v[i] * a[i][j]).sum::<f64>() * beta;
            for i in k + 1..n {
                a[i][j] -= s * v[i];
            }
        }
        // Right: A <- A (I - beta v v^T) on columns k+1..n.
        for row in a.iter_mut() {
            let s: f64 = (k + 1..n).map(|j| row[j] * v[j]).sum::<f64>() * beta;
            for j in k + 1..n {
                row[j] -= s * v[j];
            }
        }
        a[k + 1][k] = alpha;
        for row in a.iter_mut().skip(k + 2) {
            row[k] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroyed).
#[allow(clippy::many_single_char_names)]
fn hqr(a: &mut [Vec<f64>], cap: usize) -> Result<Vec<Complex64>, LinalgError> {
    let n = a.len() as isize;
    let eps = f64::EPSILON;
    let mut wr = vec![Complex64::new(0.0, 0.0); n as usize];
    let mut anorm = 0.0;
    for i in 0..n as usize {
        for j in i.saturating_sub(1)..n as usize {
            anorm += a[i][j].abs();
        }
    }
    let mut total = 0usize;
    let mut nn = n - 1;
    let mut t = 0.0;
    macro_rules! at {
        ($i:expr, $j:expr) => {
            a[($i) as usize][($j) as usize]
        };
    }
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = at!(l - 1, l - 1).abs() + at!(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at!(l, l - 1).abs() <= eps * s {
                    at!(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = at!(nn, nn);
            if l == nn {
                wr[nn as usize] = Complex64::new(x + t, 0.0);
                nn -= 1;
            } else {
                let mut y = at!(nn - 1, nn - 1);
                let mut w = at!(nn, nn - 1) * at!(nn - 1, nn);
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        let lo = if z != 0.0 { x - w / z } else { x + z };
                        wr[(nn - 1) as usize] = Complex64::new(x + z, 0.0);
                        wr[nn as usize] = Complex64::new(lo, 0.0);
                    } else {
                        wr[nn as usize] = Complex64::new(x + p, -z);
                        wr[(nn - 1) as usize] = Complex64::new(x + p, z);
                    }
                    nn -= 2;
                } else {
                    if total >= cap {
                        let found = wr[(nn + 1) as usize..].to_vec();
                        return Err(LinalgError::NoConvergence { iterations: total, found });
                    }
                    if its > 0 && its % 10 == 0 {
                        t += x;
                        for i in 0..=nn {
                            at!(i, i) -= x;
                        }
                        let s = at!(nn, nn - 1).abs() + at!(nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    total += 1;
                    let (mut p, mut q, mut r, mut z);
                    let mut m = nn - 2;
                    loop {
                        z = at!(m, m);
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - w) / at!(m + 1, m) + at!(m, m + 1);
                        q = at!(m + 1, m + 1) - z - r - s0;
                        r = at!(m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = at!(m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (at!(m - 1, m - 1).abs() + z.abs() + at!(m + 1, m + 1).abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nn - 1 {
                        at!(i + 2, i) = 0.0;
                        if i != m {
                            at!(i + 2, i - 1) = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = at!(k, k - 1);
                            q = at!(k + 1, k - 1);
                            r = 0.0;
                            if k + 1 != nn {
                                r = at!(k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    at!(k, k - 1) = -at!(k, k - 1);
                                }
                            } else {
                                at!(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = at!(k, j) + q * at!(k + 1, j);
                                if k + 1 != nn {
                                    p += r * at!(k + 2, j);
                                    at!(k + 2, j) -= p * z;
                                }
                                at!(k + 1, j) -= p * y;
                                at!(k, j) -= p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * at!(i, k) + y * at!(i, k + 1);
                                if k + 1 != nn {
                                    p += z * at!(i, k + 2);
                                    at!(i, k + 2) -= p * r;
                                }
                                at!(i, k + 1) -= p * q;
                                at!(i, k) -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l + 1 >= nn {
                break;
            }
        }
    }
    Ok(wr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_abscissa() {
        let s = eigenvalues(&DenseMatrix::from_diag(&[-1.0, -2.0, 0.5])).unwrap();
        assert_eq!(s.spectral_abscissa, 0.5);
        assert_eq!(s.eigenvalues.len(), 3);
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let s = eigenvalues(&DenseMatrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
        assert!(s.spectral_abscissa.abs() < 1e-15);
        assert!((s.eigenvalues[0] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((s.eigenvalues[1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        let a = DenseMatrix::from_rows(&[&[6.0, -11.0, 6.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let s = eigenvalues(&a).unwrap();
        for (z, want) in s.eigenvalues.iter().zip([3.0, 2.0, 1.0]) {
            assert!((z.re - want).abs() < 1e-10 && z.im.abs() < 1e-10, "{z}");
        }
    }

    #[test]
    fn defective_and_zero_matrices() {
        let j = DenseMatrix::from_rows(&[&[2.0, 1.0, 0.0], &[0.0, 2.0, 1.0], &[0.0, 0.0, 2.0]]);
        let s = eigenvalues(&j).unwrap();
        assert!((s.spectral_abscissa - 2.0).abs() < 1e-12);
        let z = eigenvalues(&DenseMatrix::zeros(4, 4)).unwrap();
        assert!(z.eigenvalues.iter().all(|v| v.norm() == 0.0));
    }
}
