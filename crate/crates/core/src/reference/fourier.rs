use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Uniform periodic grid on `[a, a + period)` with its FFT plans.
pub(crate) struct Fourier {
    pub n: usize,
    pub a: f64,
    pub period: f64,
    /// Angular wavenumbers in FFT order.
    pub k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fourier {
    pub fn new(n: usize, a: f64, period: f64) -> Self {
        assert!(n >= 4 && n.is_multiple_of(2), "even grid size required");
        let mut planner = FftPlanner::new();
        let k = (0..n)
            .map(|m| {
                let m = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * m / period
            })
            .collect();
        Self { n, a, period, k, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.a + self.period * j as f64 / self.n as f64).collect()
    }

    pub fn forward(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut buf = u.to_vec();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn forward_real(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Normalised inverse transform.
    pub fn inverse(&self, uh: &[Complex64]) -> Vec<Complex64> {
        let mut buf = uh.to_vec();
        self.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    pub fn inverse_real(&self, uh: &[Complex64]) -> Vec<f64> {
        self.inverse(uh).into_iter().map(|v| v.re).collect()
    }

    /// `i k` with the Nyquist mode zeroed, for odd derivatives.
    pub fn ik(&self) -> Vec<Complex64> {
        self.k
            .iter()
            .enumerate()
            .map(|(m, &k)| if m == self.n / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k) })
            .collect()
    }

    /// Trigonometric interpolation matrix rows for points `xs`.
    pub fn interpolator(&self, xs: &[f64]) -> Interpolator {
        let n = self.n;
        let mut basis = Vec::with_capacity(xs.len() * n);
        for &x in xs {
            for (m, &k) in self.k.iter().enumerate() {
                let th = k * (x - self.a);
                let v = if m == n / 2 { Complex64::new(th.cos(), 0.0) } else { Complex64::from_polar(1.0, th) };
                basis.push(v / n as f64);
            }
        }
        Interpolator { n, basis }
    }
}

pub(crate) struct Interpolator {
    n: usize,
    basis: Vec<Complex64>,
}

impl Interpolator {
    pub fn eval(&self, uh: &[Complex64]) -> Vec<Complex64> {
        self.basis.chunks(self.n).map(|row| row.iter().zip(uh).map(|(b, u)| b * u).sum()).collect()
    }
}
