//! Batched jet kernels shared by taped training and tape-free evaluation.

use super::jet::tanh_taylor;
use super::Tensor;
use crate::linalg::gemm_raw;

/// `z = x Wᵀ + b`, with the bias added to value rows only. `w` is `out × in` row-major.
pub fn affine_forward(x: &Tensor, w: &[f64], b: &[f64], out: usize) -> Tensor {
    let inp = x.cols;
    assert_eq!(w.len(), out * inp);
    assert_eq!(b.len(), out);
    let mut z = Tensor::zeros(x.npts, x.layout.clone(), out);
    let rows = x.rows();
    let nc = x.ncoef();
    for p in 0..x.npts {
        z.data[p * nc * out..p * nc * out + out].copy_from_slice(b);
    }
    gemm_raw(rows, inp, out, 1.0, &x.data, false, inp, w, true, inp, 1.0, &mut z.data);
    z
}

/// Returns `(x̄, W̄, b̄)` for [`affine_forward`].
pub fn affine_backward(x: &Tensor, w: &[f64], zbar: &Tensor, need_x: bool) -> (Option<Tensor>, Vec<f64>, Vec<f64>) {
    let inp = x.cols;
    let out = zbar.cols;
    let rows = x.rows();
    let mut wbar = vec![0.0; out * inp];
    gemm_raw(out, rows, inp, 1.0, &zbar.data, true, out, &x.data, false, inp, 0.0, &mut wbar);
    let nc = x.ncoef();
    let mut bbar = vec![0.0; out];
    for p in 0..x.npts {
        let row = &zbar.data[p * nc * out..p * nc * out + out];
        for (b, g) in bbar.iter_mut().zip(row) {
            *b += g;
        }
    }
    let xbar = need_x.then(|| {
        let mut xb = Tensor::zeros(x.npts, x.layout.clone(), inp);
        gemm_raw(rows, out, inp, 1.0, &zbar.data, false, out, w, false, inp, 0.0, &mut xb.data);
        xb
    });
    (xbar, wbar, bbar)
}

/// Per-point jet product over feature vectors: `out_k += Σ a_i b_j` over the layout table.
#[inline]
fn jet_mul_acc(table: &[(u8, u8, u8)], cols: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for &(i, j, k) in table {
        let (i, j, k) = (i as usize * cols, j as usize * cols, k as usize * cols);
        let (ai, bj) = (&a[i..i + cols], &b[j..j + cols]);
        for ((o, x), y) in out[k..k + cols].iter_mut().zip(ai).zip(bj) {
            *o += x * y;
        }
    }
}

pub fn tanh_forward(a: &Tensor) -> Tensor {
    let cols = a.cols;
    let nc = a.ncoef();
    let mut y = Tensor::zeros(a.npts, a.layout.clone(), cols);
    if nc == 1 {
        for (o, v) in y.data.iter_mut().zip(&a.data) {
            *o = v.tanh();
        }
        return y;
    }
    let order = a.layout.max_order() as usize;
    let table = a.layout.table();
    let block = nc * cols;
    let mut f = vec![[0.0; 5]; cols];
    let mut acc = vec![0.0; block];
    let mut tmp = vec![0.0; block];
    for p in 0..a.npts {
        let ap = &a.data[p * block..(p + 1) * block];
        let yp = &mut y.data[p * block..(p + 1) * block];
        for (fi, v) in f.iter_mut().zip(&ap[..cols]) {
            *fi = tanh_taylor(v.tanh());
        }
        if order == 1 {
            for c in 1..nc {
                for k in 0..cols {
                    yp[c * cols + k] = f[k][1] * ap[c * cols + k];
                }
            }
            for k in 0..cols {
                yp[k] = f[k][0];
            }
            continue;
        }
        // Horner in the nilpotent part h = a - a0; h^(order+1) vanishes.
        acc.fill(0.0);
        for k in 0..cols {
            acc[k] = f[k][order];
        }
        for deg in (0..order).rev() {
            tmp.fill(0.0);
            // h has a zero value row, so skip table entries that read it.
            for &(i, j, kk) in table {
                if j == 0 {
                    continue;
                }
                let (i, j, kk) = (i as usize * cols, j as usize * cols, kk as usize * cols);
                for k in 0..cols {
                    tmp[kk + k] += acc[i + k] * ap[j + k];
                }
            }
            for k in 0..cols {
                tmp[k] += f[k][deg];
            }
            std::mem::swap(&mut acc, &mut tmp);
        }
        yp.copy_from_slice(&acc);
    }
    y
}

/// Vector-Jacobian product of [`tanh_forward`] given its output `y`.
/// Uses `dy = (1 - y²) da` in the truncated algebra.
pub fn tanh_backward(y: &Tensor, ybar: &Tensor) -> Tensor {
    let cols = y.cols;
    let nc = y.ncoef();
    let mut abar = Tensor::zeros(y.npts, y.layout.clone(), cols);
    if nc == 1 {
        for ((o, v), g) in abar.data.iter_mut().zip(&y.data).zip(&ybar.data) {
            *o = (1.0 - v * v) * g;
        }
        return abar;
    }
    let table = y.layout.table();
    let block = nc * cols;
    let mut s = vec![0.0; block];
    for p in 0..y.npts {
        let yp = &y.data[p * block..(p + 1) * block];
        let gp = &ybar.data[p * block..(p + 1) * block];
        s.fill(0.0);
        jet_mul_acc(table, cols, yp, yp, &mut s);
        for v in s.iter_mut() {
            *v = -*v;
        }
        for v in s[..cols].iter_mut() {
            *v += 1.0;
        }
        let ap = &mut abar.data[p * block..(p + 1) * block];
        for &(i, j, k) in table {
            let (i, j, k) = (i as usize * cols, j as usize * cols, k as usize * cols);
            for f in 0..cols {
                ap[i + f] += gp[k + f] * s[j + f];
            }
        }
    }
    abar
}

#[cfg(test)]
mod tests {
    use super::super::{Jet, JetLayout, MultiIndex};
    use super::*;

    #[test]
    fn batched_tanh_matches_scalar_jet() {
        let layout = JetLayout::covering(&[MultiIndex::new(4, 0), MultiIndex::new(1, 1), MultiIndex::new(0, 2)]).unwrap();
        let x = Tensor::seed_inputs(&[0.3, -0.8], &[0.1, 0.6], layout.clone(), false);
        // feature = 0.7 x - 1.1 t + 0.2
        let z = affine_forward(&x, &[0.7, -1.1], &[0.2], 1);
        let y = tanh_forward(&z);
        for (p, (&x0, &t0)) in [0.3, -0.8].iter().zip(&[0.1, 0.6]).enumerate() {
            let j = (Jet::var_x(x0) * 0.7 - Jet::var_t(t0) * 1.1 + 0.2).tanh();
            for (c, m) in layout.indices().iter().enumerate() {
                assert!((y.at(p, c, 0) - j.coeff(*m)).abs() < 1e-14, "{m:?}");
            }
        }
    }

    #[test]
    fn tanh_vjp_matches_finite_differences() {
        let layout = JetLayout::covering(&[MultiIndex::new(3, 0), MultiIndex::new(0, 1)]).unwrap();
        let mut a = Tensor::zeros(2, layout, 3);
        for (i, v) in a.data.iter_mut().enumerate() {
            *v = ((i * 37 % 11) as f64 - 5.0) / 7.0;
        }
        let g: Vec<f64> = (0..a.data.len()).map(|i| ((i * 13 % 7) as f64 - 3.0) / 5.0).collect();
        let ybar = Tensor { data: g.clone(), ..a.clone() };
        let abar = tanh_backward(&tanh_forward(&a), &ybar);
        let h = 1e-6;
        for i in 0..a.data.len() {
            let f = |d: f64| {
                let mut b = a.clone();
                b.data[i] += d;
                tanh_forward(&b).data.iter().zip(&g).map(|(y, g)| y * g).sum::<f64>()
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            assert!((fd - abar.data[i]).abs() < 1e-8, "{i}: {fd} vs {}", abar.data[i]);
        }
    }
}
