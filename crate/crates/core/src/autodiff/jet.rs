use std::ops::{Add, Div, Mul, Neg, Sub};

use super::MultiIndex;

/// Number of coefficients of a total-order-4 expansion in two variables.
pub const JET_LEN: usize = 15;
pub const MAX_ORDER: u8 = 4;

/// Truncated Taylor expansion in (x, t) to total order 4.
///
/// Coefficients are normalised: entry for `(a, b)` holds `∂ˣᵃ∂ᵗᵇ f / (a! b!)`.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    c: [f64; JET_LEN],
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet").field("value", &self.c[0]).field("coeffs", &&self.c[1..]).finish()
    }
}

#[inline]
pub(crate) const fn slot(a: u8, b: u8) -> usize {
    let d = (a + b) as usize;
    d * (d + 1) / 2 + b as usize
}

const fn exps() -> [(u8, u8); JET_LEN] {
    let mut out = [(0u8, 0u8); JET_LEN];
    let mut d = 0u8;
    while d <= MAX_ORDER {
        let mut b = 0u8;
        while b <= d {
            out[slot(d - b, b)] = (d - b, b);
            b += 1;
        }
        d += 1;
    }
    out
}

const EXPS: [(u8, u8); JET_LEN] = exps();

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        let mut c = [0.0; JET_LEN];
        c[0] = v;
        Self { c }
    }

    /// The coordinate `x` evaluated at `x0`.
    pub fn var_x(x0: f64) -> Self {
        let mut j = Self::constant(x0);
        j.c[slot(1, 0)] = 1.0;
        j
    }

    /// The coordinate `t` evaluated at `t0`.
    pub fn var_t(t0: f64) -> Self {
        let mut j = Self::constant(t0);
        j.c[slot(0, 1)] = 1.0;
        j
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Normalised coefficient for `idx`; zero beyond order 4.
    pub fn coeff(&self, idx: MultiIndex) -> f64 {
        if idx.order() > MAX_ORDER {
            0.0
        } else {
            self.c[slot(idx.x, idx.t)]
        }
    }

    /// The partial derivative `∂ˣᵃ∂ᵗᵇ` of the expanded function.
    pub fn deriv(&self, idx: MultiIndex) -> f64 {
        self.coeff(idx) * factorial(idx.x) * factorial(idx.t)
    }

    pub fn from_coeffs(c: [f64; JET_LEN]) -> Self {
        Self { c }
    }

    pub fn coeffs(&self) -> &[f64; JET_LEN] {
        &self.c
    }

    /// Builds the jet of `f(self)` from the Taylor coefficients `f^(k)(a0)/k!`.
    fn compose(&self, f: [f64; 5]) -> Self {
        let mut h = *self;
        h.c[0] = 0.0;
        // Horner: f0 + h(f1 + h(f2 + h(f3 + h f4)))
        let mut acc = Jet::constant(f[4]);
        for k in (0..4).rev() {
            acc = acc * h;
            acc.c[0] += f[k];
        }
        acc
    }

    pub fn exp(self) -> Self {
        let e = self.c[0].exp();
        self.compose([e, e, e / 2.0, e / 6.0, e / 24.0])
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose([s, c, -s / 2.0, -c / 6.0, s / 24.0])
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose([c, -s, -c / 2.0, s / 6.0, c / 24.0])
    }

    pub fn tanh(self) -> Self {
        let y = self.c[0].tanh();
        self.compose(tanh_taylor(y))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.c[0];
        let r2 = r * r;
        self.compose([r, -r2, r2 * r, -r2 * r2, r2 * r2 * r])
    }

    pub fn ln(self) -> Self {
        let a = self.c[0];
        let r = 1.0 / a;
        self.compose([a.ln(), r, -r * r / 2.0, r * r * r / 3.0, -r * r * r * r / 4.0])
    }

    pub fn sqrt(self) -> Self {
        self.powf(0.5)
    }

    pub fn powf(self, p: f64) -> Self {
        let a = self.c[0];
        let mut f = [0.0; 5];
        let mut binom = 1.0;
        for (k, fk) in f.iter_mut().enumerate() {
            *fk = binom * a.powf(p - k as f64);
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(f)
    }

    pub fn powi(self, n: i32) -> Self {
        let mut out = Jet::constant(1.0);
        let mut base = if n < 0 { self.recip() } else { self };
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                out = out * base;
            }
            base = base * base;
            e >>= 1;
        }
        out
    }

    /// `1 / cosh²` via `1 - tanh²`.
    pub fn sech2(self) -> Self {
        let t = self.tanh();
        Jet::constant(1.0) - t * t
    }
}

/// Normalised Taylor coefficients of tanh at a point where `tanh = y`.
#[inline]
pub(crate) fn tanh_taylor(y: f64) -> [f64; 5] {
    let s = 1.0 - y * y;
    [y, s, -y * s, s * (3.0 * y * y - 1.0) / 3.0, y * s * (2.0 - 3.0 * y * y) / 3.0]
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a -= b;
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for a in self.c.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut out = [0.0; JET_LEN];
        for i in 0..JET_LEN {
            let ai = self.c[i];
            if ai == 0.0 {
                continue;
            }
            let (xi, ti) = EXPS[i];
            for j in 0..JET_LEN {
                let (xj, tj) = EXPS[j];
                if xi + ti + xj + tj > MAX_ORDER {
                    // Slots are graded by order, so every later j is too high as well.
                    break;
                }
                out[slot(xi + xj, ti + tj)] += ai * rhs.c[j];
            }
        }
        Jet { c: out }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for a in self.c.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        rhs + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(x: u8, t: u8) -> MultiIndex {
        MultiIndex::new(x, t)
    }

    #[test]
    fn slots_are_graded_and_unique() {
        for (k, &(a, b)) in EXPS.iter().enumerate() {
            assert_eq!(slot(a, b), k);
        }
    }

    #[test]
    fn polynomial_x2_t() {
        let (x0, t0) = (0.7, -1.3);
        let f = Jet::var_x(x0) * Jet::var_x(x0) * Jet::var_t(t0);
        assert!((f.deriv(mi(2, 0)) - 2.0 * t0).abs() < 1e-15);
        assert!((f.deriv(mi(0, 1)) - x0 * x0).abs() < 1e-15);
        assert!((f.deriv(mi(2, 1)) - 2.0).abs() < 1e-15);
        assert_eq!(f.deriv(mi(3, 0)), 0.0);
    }

    #[test]
    fn fourth_derivative_of_sine() {
        let x = 0.3f64;
        let f = Jet::var_x(x).sin();
        assert!((f.deriv(mi(4, 0)) - x.sin()).abs() < 1e-12);
        assert!((f.deriv(mi(3, 0)) + x.cos()).abs() < 1e-12);
    }

    #[test]
    fn elementary_identities() {
        let x = Jet::var_x(0.4) + Jet::var_t(0.2) * 0.5;
        let one = x.exp() * (-x).exp();
        let pyth = x.sin() * x.sin() + x.cos() * x.cos();
        let back = x.exp().ln();
        let sq = x.sqrt() * x.sqrt();
        let tanh = (x.exp() - (-x).exp()) / (x.exp() + (-x).exp());
        for k in 0..JET_LEN {
            let e = if k == 0 { 1.0 } else { 0.0 };
            assert!((one.c[k] - e).abs() < 1e-13);
            assert!((pyth.c[k] - e).abs() < 1e-13);
            assert!((back.c[k] - x.c[k]).abs() < 1e-13);
            assert!((sq.c[k] - x.c[k]).abs() < 1e-13);
            assert!((tanh.c[k] - x.tanh().c[k]).abs() < 1e-13);
        }
        let p = x.powi(-3) * x.powi(3);
        assert!((p.c[0] - 1.0).abs() < 1e-14 && p.c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn derivatives_beyond_order_four_are_zero() {
        let f = Jet::var_x(1.0).exp();
        assert_eq!(f.coeff(mi(5, 0)), 0.0);
    }
}
