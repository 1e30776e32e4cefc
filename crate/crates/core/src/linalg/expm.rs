use super::{require_square_finite, DenseMatrix, LinalgError, Lu};

const THETA_13: f64 = 5.371920351148152;

const B: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Every intermediate of the [13/13] Padé evaluation, kept for the reverse sweep.
struct PadeGraph {
    xs: DenseMatrix,
    a2: DenseMatrix,
    a4: DenseMatrix,
    a6: DenseMatrix,
    w1: DenseMatrix,
    w2: DenseMatrix,
    z1: DenseMatrix,
    lu: Lu,
    /// `squares[0]` is the Padé approximant, `squares[s]` the final result.
    squares: Vec<DenseMatrix>,
    scale: f64,
}

fn lincomb(terms: &[(f64, &DenseMatrix)], identity: f64) -> DenseMatrix {
    let mut out = terms[0].1.scaled(terms[0].0);
    for (c, m) in &terms[1..] {
        out.axpy(*c, m);
    }
    out.add_identity(identity);
    out
}

fn forward(a: &DenseMatrix, dt: f64) -> Result<PadeGraph, LinalgError> {
    require_square_finite(a, "expm")?;
    if !dt.is_finite() {
        return Err(LinalgError::Domain(format!("expm: time step {dt} is not finite")));
    }
    let n = a.rows();
    let x = a.scaled(dt);
    let norm = x.norm1();
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let xs = x.scaled(scale);

    let a2 = xs.matmul(&xs);
    let a4 = a2.matmul(&a2);
    let a6 = a2.matmul(&a4);

    let w1 = lincomb(&[(B[13], &a6), (B[11], &a4), (B[9], &a2)], 0.0);
    let mut w2 = a6.matmul(&w1);
    w2.axpy(B[7], &a6);
    w2.axpy(B[5], &a4);
    w2.axpy(B[3], &a2);
    w2.add_identity(B[1]);
    let u = xs.matmul(&w2);

    let z1 = lincomb(&[(B[12], &a6), (B[10], &a4), (B[8], &a2)], 0.0);
    let mut v = a6.matmul(&z1);
    v.axpy(B[6], &a6);
    v.axpy(B[4], &a4);
    v.axpy(B[2], &a2);
    v.add_identity(B[0]);

    let mut p = v.clone();
    p.axpy(1.0, &u);
    let mut q = v;
    q.axpy(-1.0, &u);
    let lu = Lu::factor(&q)?;
    let mut squares = Vec::with_capacity(s as usize + 1);
    squares.push(lu.solve(&p));
    for _ in 0..s {
        let last = squares.last().expect("non-empty");
        squares.push(last.matmul(last));
    }
    debug_assert_eq!(squares[0].rows(), n);
    Ok(PadeGraph { xs, a2, a4, a6, w1, w2, z1, lu, squares, scale })
}

/// `e^{A dt}` by [13/13] Padé approximation with scaling and squaring.
pub fn expm(a: &DenseMatrix, dt: f64) -> Result<DenseMatrix, LinalgError> {
    let mut g = forward(a, dt)?;
    Ok(g.squares.pop().expect("non-empty"))
}

fn mm(a: &DenseMatrix, ta: bool, b: &DenseMatrix, tb: bool) -> DenseMatrix {
    let rows = if ta { a.cols() } else { a.rows() };
    let cols = if tb { b.rows() } else { b.cols() };
    let mut out = DenseMatrix::zeros(rows, cols);
    super::gemm(1.0, a, ta, b, tb, 0.0, &mut out);
    out
}

/// `out += op(a) op(b)`
fn mm_acc(out: &mut DenseMatrix, a: &DenseMatrix, ta: bool, b: &DenseMatrix, tb: bool) {
    super::gemm(1.0, a, ta, b, tb, 1.0, out);
}

/// Gradient of `<upstream, e^{A dt}>` with respect to `A`, obtained by reversing
/// the exact sequence of operations `expm` performs.
pub fn expm_with_grad(a: &DenseMatrix, dt: f64, upstream: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if upstream.rows() != a.rows() || upstream.cols() != a.cols() {
        return Err(LinalgError::Dimension(format!(
            "upstream is {}x{} but A is {}x{}",
            upstream.rows(),
            upstream.cols(),
            a.rows(),
            a.cols()
        )));
    }
    let g = forward(a, dt)?;
    let n = a.rows();

    // Squaring: R_{i+1} = R_i R_i.
    let mut rbar = upstream.clone();
    for r in g.squares[..g.squares.len() - 1].iter().rev() {
        let mut next = mm(&rbar, false, r, true);
        mm_acc(&mut next, r, true, &rbar, false);
        rbar = next;
    }

    // R0 = Q^{-1} P with P = V + U, Q = V - U.
    let r0 = &g.squares[0];
    let pbar = g.lu.solve_transpose(&rbar);
    let qbar = mm(&pbar, false, r0, true).scaled(-1.0);
    let mut vbar = pbar.clone();
    vbar.axpy(1.0, &qbar);
    let mut ubar = pbar;
    ubar.axpy(-1.0, &qbar);

    let mut xs_bar = DenseMatrix::zeros(n, n);
    let mut a2_bar = DenseMatrix::zeros(n, n);
    let mut a4_bar = DenseMatrix::zeros(n, n);
    let mut a6_bar = DenseMatrix::zeros(n, n);

    // U = Xs W2
    mm_acc(&mut xs_bar, &ubar, false, &g.w2, true);
    let w2_bar = mm(&g.xs, true, &ubar, false);

    // W2 = A6 W1 + b7 A6 + b5 A4 + b3 A2 + b1 I
    mm_acc(&mut a6_bar, &w2_bar, false, &g.w1, true);
    a6_bar.axpy(B[7], &w2_bar);
    a4_bar.axpy(B[5], &w2_bar);
    a2_bar.axpy(B[3], &w2_bar);
    let w1_bar = mm(&g.a6, true, &w2_bar, false);

    // W1 = b13 A6 + b11 A4 + b9 A2
    a6_bar.axpy(B[13], &w1_bar);
    a4_bar.axpy(B[11], &w1_bar);
    a2_bar.axpy(B[9], &w1_bar);

    // V = A6 Z1 + b6 A6 + b4 A4 + b2 A2 + b0 I
    mm_acc(&mut a6_bar, &vbar, false, &g.z1, true);
    a6_bar.axpy(B[6], &vbar);
    a4_bar.axpy(B[4], &vbar);
    a2_bar.axpy(B[2], &vbar);
    let z1_bar = mm(&g.a6, true, &vbar, false);

    // Z1 = b12 A6 + b10 A4 + b8 A2
    a6_bar.axpy(B[12], &z1_bar);
    a4_bar.axpy(B[10], &z1_bar);
    a2_bar.axpy(B[8], &z1_bar);

    // A6 = A2 A4
    mm_acc(&mut a2_bar, &a6_bar, false, &g.a4, true);
    mm_acc(&mut a4_bar, &g.a2, true, &a6_bar, false);

    // A4 = A2 A2
    mm_acc(&mut a2_bar, &a4_bar, false, &g.a2, true);
    mm_acc(&mut a2_bar, &g.a2, true, &a4_bar, false);

    // A2 = Xs Xs
    mm_acc(&mut xs_bar, &a2_bar, false, &g.xs, true);
    mm_acc(&mut xs_bar, &g.xs, true, &a2_bar, false);

    Ok(xs_bar.scaled(g.scale * dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, bound: f64, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DenseMatrix::zeros(n, n);
        for v in m.as_mut_slice() {
            *v = rng.random_range(-1.0..1.0);
        }
        let s = bound / m.norm1();
        m.scaled(s)
    }

    fn taylor(a: &DenseMatrix, dt: f64) -> DenseMatrix {
        let x = a.scaled(dt);
        let mut term = DenseMatrix::identity(a.rows());
        let mut sum = term.clone();
        for k in 1..=60 {
            term = term.matmul(&x).scaled(1.0 / k as f64);
            sum.axpy(1.0, &term);
        }
        sum
    }

    fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        d.norm_fro() / b.norm_fro()
    }

    #[test]
    fn zero_gives_identity() {
        assert_eq!(expm(&DenseMatrix::zeros(3, 3), 1.0).unwrap(), DenseMatrix::identity(3));
    }

    #[test]
    fn nilpotent_truncates() {
        let a = DenseMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let e = expm(&a, 1.0).unwrap();
        assert_eq!(e, DenseMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
    }

    #[test]
    fn matches_taylor_series() {
        for seed in 0..10 {
            let a = random(6, 3.0, seed);
            let e = expm(&a, 1.0).unwrap();
            assert!(rel_diff(&e, &taylor(&a, 1.0)) < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn large_norm_uses_squaring_and_stays_accurate() {
        // Scalar exponentials are exact references for a diagonal input.
        let a = DenseMatrix::from_diag(&[-20.0, 3.0, 15.0, -0.5]);
        let e = expm(&a, 2.5).unwrap();
        for (i, d) in [-20.0f64, 3.0, 15.0, -0.5].iter().enumerate() {
            let exact = (d * 2.5).exp();
            assert!((e[(i, i)] - exact).abs() <= 1e-12 * exact, "{} vs {exact}", e[(i, i)]);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(expm(&DenseMatrix::zeros(2, 3), 1.0), Err(LinalgError::Dimension(_))));
        let mut a = DenseMatrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(expm(&a, 1.0), Err(LinalgError::Domain(_))));
        assert!(matches!(expm(&DenseMatrix::zeros(2, 2), f64::INFINITY), Err(LinalgError::Domain(_))));
    }

    fn fd_grad(a: &DenseMatrix, dt: f64, g: &DenseMatrix, h: f64) -> DenseMatrix {
        let n = a.rows();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut ap = a.clone();
                ap[(i, j)] += h;
                let mut am = a.clone();
                am[(i, j)] -= h;
                let fp: f64 = expm(&ap, dt).unwrap().as_slice().iter().zip(g.as_slice()).map(|(x, y)| x * y).sum();
                let fm: f64 = expm(&am, dt).unwrap().as_slice().iter().zip(g.as_slice()).map(|(x, y)| x * y).sum();
                out[(i, j)] = (fp - fm) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn gradient_at_zero_is_dt_times_upstream() {
        let n = 3;
        let dt = 0.7;
        for i in 0..n {
            for j in 0..n {
                let mut up = DenseMatrix::zeros(n, n);
                up[(i, j)] = 1.0;
                let g = expm_with_grad(&DenseMatrix::zeros(n, n), dt, &up).unwrap();
                let fd = fd_grad(&DenseMatrix::zeros(n, n), dt, &up, 1e-6);
                assert!((g[(i, j)] - dt).abs() < 1e-12);
                assert!(rel_diff(&g, &fd) < 1e-6);
            }
        }
    }

    #[test]
    fn diagonal_gradient_is_scalar_derivative() {
        let d = [-1.0, 0.3, 2.0];
        let a = DenseMatrix::from_diag(&d);
        let up = DenseMatrix::from_rows(&[&[1.5, 0.0, 0.0], &[0.0, -2.0, 0.0], &[0.0, 0.0, 0.25]]);
        let dt = 0.9;
        let g = expm_with_grad(&a, dt, &up).unwrap();
        for i in 0..3 {
            let exact = dt * (d[i] * dt).exp() * up[(i, i)];
            assert!((g[(i, i)] - exact).abs() < 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences_with_squaring() {
        let a = random(4, 12.0, 7);
        let up = random(4, 1.0, 8);
        let g = expm_with_grad(&a, 1.0, &up).unwrap();
        let fd = fd_grad(&a, 1.0, &up, 1e-6);
        assert!(rel_diff(&g, &fd) < 1e-5, "{}", rel_diff(&g, &fd));
    }
}
