//! Viscous Burgers reference by the Cole-Hopf transform, with a finite-difference
//! solver to validate it.

use std::f64::consts::PI;

use super::{ReferenceError, ReferenceField};
use crate::systems::{SystemId, SystemSpec};

pub const HOPF_NODES: usize = 4001;

/// `∫₀^y u₀(s) ds` for `u₀ = -sin(πx)`, valid on the whole line.
fn potential(y: f64) -> f64 {
    ((PI * y).cos() - 1.0) / PI
}

/// Whole-line solution of `u_t + u u_x = ν u_xx` with `u(x, 0) = -sin(πx)`,
///
/// `u = ∫ (x-y)/t e^{-G/2ν} dy / ∫ e^{-G/2ν} dy`,  `G = ∫₀^y u₀ + (x-y)²/2t`,
///
/// by the trapezoid rule on `nodes` points. The odd symmetry of the initial
/// profile about 0 and 1 makes this the Dirichlet solution on `[0, 1]`.
pub fn cole_hopf(nu: f64, x: f64, t: f64, nodes: usize) -> f64 {
    if t == 0.0 {
        return -(PI * x).sin();
    }
    let half = (2.0 * t * (2.0 / PI + 80.0 * nu)).sqrt();
    let h = 2.0 * half / (nodes - 1) as f64;
    let ys: Vec<f64> = (0..nodes).map(|i| x - half + h * i as f64).collect();
    let g: Vec<f64> = ys.iter().map(|&y| potential(y) + (x - y).powi(2) / (2.0 * t)).collect();
    let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for (y, gi) in ys.iter().zip(&g) {
        let w = (-(gi - gmin) / (2.0 * nu)).exp();
        num += (x - y) / t * w;
        den += w;
    }
    num / den
}

pub fn solve_cole_hopf(spec: &SystemSpec, xs: &[f64], ts: &[f64], nodes: usize) -> Result<ReferenceField, ReferenceError> {
    if spec.id != SystemId::Burgers {
        return Err(ReferenceError::Unsupported { system: spec.id, solver: "cole-hopf" });
    }
    let nu = spec.coef("nu");
    let values = ts.iter().flat_map(|&t| xs.iter().map(move |&x| cole_hopf(nu, x, t, nodes))).collect();
    Ok(ReferenceField::new(spec.id, xs, ts, 1, values, "cole-hopf"))
}

/// Second-order central differences in conservative form with classical RK4,
/// Dirichlet zero at both ends. Output by linear interpolation between nodes.
pub fn solve_burgers_fd(spec: &SystemSpec, cells: usize, xs: &[f64], ts: &[f64]) -> Result<ReferenceField, ReferenceError> {
    if spec.id != SystemId::Burgers {
        return Err(ReferenceError::Unsupported { system: spec.id, solver: "finite-difference" });
    }
    let nu = spec.coef("nu");
    let dx = 1.0 / cells as f64;
    let mut u: Vec<f64> = (0..=cells).map(|j| -(PI * j as f64 * dx).sin()).collect();
    u[0] = 0.0;
    u[cells] = 0.0;
    let rhs = |u: &[f64], out: &mut [f64]| {
        out[0] = 0.0;
        out[cells] = 0.0;
        for j in 1..cells {
            let flux = (u[j + 1] * u[j + 1] - u[j - 1] * u[j - 1]) / (4.0 * dx);
            out[j] = -flux + nu * (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (dx * dx);
        }
    };
    let dt_max = 0.25 * dx * dx / nu;
    let n = cells + 1;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut now = 0.0;
    let mut values = Vec::with_capacity(xs.len() * ts.len());
    for &t in ts {
        let gap = t - now;
        if gap > 0.0 {
            let steps = (gap / dt_max).ceil() as usize;
            let h = gap / steps as f64;
            for _ in 0..steps {
                rhs(&u, &mut k1);
                tmp.iter_mut().zip(&u).zip(&k1).for_each(|((o, a), b)| *o = a + 0.5 * h * b);
                rhs(&tmp, &mut k2);
                tmp.iter_mut().zip(&u).zip(&k2).for_each(|((o, a), b)| *o = a + 0.5 * h * b);
                rhs(&tmp, &mut k3);
                tmp.iter_mut().zip(&u).zip(&k3).for_each(|((o, a), b)| *o = a + h * b);
                rhs(&tmp, &mut k4);
                for j in 0..n {
                    u[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(ReferenceError::Diverged { t });
            }
            now = t;
        }
        for &x in xs {
            let s = (x / dx).clamp(0.0, cells as f64);
            let j = (s.floor() as usize).min(cells - 1);
            let w = s - j as f64;
            values.push((1.0 - w) * u[j] + w * u[j + 1]);
        }
    }
    Ok(ReferenceField::new(spec.id, xs, ts, 1, values, "finite-difference"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_the_closed_form_surrogate_family_at_small_times() {
        // Shortly after the start the solution is close to the initial profile.
        let u = cole_hopf(0.01, 0.3, 1e-6, HOPF_NODES);
        assert!((u + (0.3 * PI).sin()).abs() < 1e-5);
    }

    #[test]
    fn odd_symmetry_keeps_boundaries_at_zero() {
        for t in [0.1, 0.5, 2.0] {
            assert!(cole_hopf(0.01, 0.0, t, HOPF_NODES).abs() < 1e-12);
            assert!(cole_hopf(0.01, 1.0, t, HOPF_NODES).abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_is_converged() {
        for &(x, t) in &[(0.05, 0.6), (0.5, 0.3), (0.9, 1.0), (0.01, 4.0)] {
            let a = cole_hopf(0.01, x, t, HOPF_NODES);
            let b = cole_hopf(0.01, x, t, 2 * HOPF_NODES - 1);
            assert!((a - b).abs() < 1e-12, "({x}, {t}): {a} vs {b}");
        }
    }
}
