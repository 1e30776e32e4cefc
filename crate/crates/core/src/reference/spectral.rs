//! Fourier pseudo-spectral solvers: IMEX Runge-Kutta for the gradient flows,
//! exponential time differencing for KS and KdV, and split-step for NLS.

use num_complex::Complex64;

use super::fourier::{Fourier, Interpolator};
use super::{march, ReferenceError, ReferenceField, Stepper};
use crate::systems::{BoundaryKind, SystemId, SystemSpec};

const BLOWUP: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralSettings {
    pub modes: usize,
    pub dt: f64,
}

impl SpectralSettings {
    pub fn default_for(id: SystemId) -> Self {
        match id {
            SystemId::KuramotoSivashinsky => Self { modes: 512, dt: 1e-3 },
            SystemId::Schrodinger => Self { modes: 256, dt: 1e-5 },
            _ => Self { modes: 256, dt: 1e-4 },
        }
    }
}

type Cplx = Complex64;

fn c(re: f64) -> Cplx {
    Cplx::new(re, 0.0)
}

/// Grid for the spatial domain; Neumann problems use the even extension to
/// twice the length so the cosine series becomes a Fourier series.
fn grid_for(spec: &SystemSpec, modes: usize) -> (Fourier, bool) {
    let (a, b) = spec.domain;
    match spec.boundary {
        BoundaryKind::Neumann => (Fourier::new(2 * modes, a, 2.0 * (b - a)), true),
        _ => (Fourier::new(modes, a, b - a), false),
    }
}

fn sample_initial(f: &Fourier, even: bool, u0: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let right = f.a + f.period / 2.0;
    f.nodes().into_iter().map(|x| if even && x > right { u0(2.0 * right - x) } else { u0(x) }).collect()
}

fn check(uh: &[Cplx], t: f64) -> Result<(), ReferenceError> {
    if uh.iter().any(|v| !(v.norm() <= BLOWUP)) {
        return Err(ReferenceError::Diverged { t });
    }
    Ok(())
}

fn record_real(uh: &[Cplx], interp: &Interpolator, out: &mut Vec<f64>) {
    out.extend(interp.eval(uh).into_iter().map(|v| v.re));
}

// ---------------------------------------------------------------------------
// IMEX ARS(4,4,3)

/// Explicit tableau, rows are stages 1..=4 over previous stages 0..i.
const ARS_EXPLICIT: [&[f64]; 4] =
    [&[0.5], &[11.0 / 18.0, 1.0 / 18.0], &[5.0 / 6.0, -5.0 / 6.0, 0.5], &[0.25, 1.75, 0.75, -1.75]];
/// Implicit tableau over stages 1..=i; the diagonal is 1/2.
const ARS_IMPLICIT: [&[f64]; 4] = [&[0.5], &[1.0 / 6.0, 0.5], &[-0.5, 0.5, 0.5], &[1.5, -1.5, 0.5, 0.5]];

struct Imex<'a> {
    f: &'a Fourier,
    l: Vec<Cplx>,
    nonlinear: Box<dyn Fn(&Fourier, &[Cplx]) -> Vec<Cplx> + 'a>,
    uh: Vec<Cplx>,
    t: f64,
}

impl Stepper for Imex<'_> {
    fn step(&mut self, h: f64) -> Result<(), ReferenceError> {
        let n = self.uh.len();
        let mut stages: Vec<Vec<Cplx>> = vec![self.uh.clone()];
        let mut nl: Vec<Vec<Cplx>> = vec![(self.nonlinear)(self.f, &self.uh)];
        for i in 0..4 {
            let (ae, ai) = (ARS_EXPLICIT[i], ARS_IMPLICIT[i]);
            let mut next = Vec::with_capacity(n);
            for m in 0..n {
                let mut rhs = self.uh[m];
                for (j, &w) in ae.iter().enumerate() {
                    rhs += nl[j][m] * (h * w);
                }
                for (j, &w) in ai[..i].iter().enumerate() {
                    rhs += self.l[m] * stages[j + 1][m] * (h * w);
                }
                next.push(rhs / (c(1.0) - self.l[m] * (h * ai[i])));
            }
            if i < 3 {
                nl.push((self.nonlinear)(self.f, &next));
            }
            stages.push(next);
        }
        self.uh = stages.pop().expect("four stages");
        self.t += h;
        check(&self.uh, self.t)
    }
}

/// Stiff linear part implicit, nonlinearity explicit; Allen-Cahn,
/// reaction-diffusion and Cahn-Hilliard.
pub fn solve_spectral_imex(
    spec: &SystemSpec,
    xs: &[f64],
    ts: &[f64],
    settings: SpectralSettings,
) -> Result<ReferenceField, ReferenceError> {
    let u0 = |x: f64| spec.initial_condition(x)[0];
    solve_spectral_imex_from(spec, &u0, xs, ts, settings)
}

pub fn solve_spectral_imex_from(
    spec: &SystemSpec,
    u0: &dyn Fn(f64) -> f64,
    xs: &[f64],
    ts: &[f64],
    settings: SpectralSettings,
) -> Result<ReferenceField, ReferenceError> {
    let (f, even) = grid_for(spec, settings.modes);
    let (l, nonlinear): (Vec<Cplx>, Box<dyn Fn(&Fourier, &[Cplx]) -> Vec<Cplx>>) = match spec.id {
        SystemId::AllenCahn => {
            let e = spec.coef("epsilon");
            let l = f.k.iter().map(|k| c(-e * k * k)).collect();
            (l, Box::new(|f: &Fourier, uh: &[Cplx]| {
                let u = f.inverse_real(uh);
                f.forward_real(&u.iter().map(|v| v - v * v * v).collect::<Vec<_>>())
            }))
        }
        SystemId::ReactionDiffusion => {
            let d = spec.coef("D");
            let l = f.k.iter().map(|k| c(-d * k * k)).collect();
            (l, Box::new(|f: &Fourier, uh: &[Cplx]| {
                let u = f.inverse_real(uh);
                f.forward_real(&u.iter().map(|v| v - v * v).collect::<Vec<_>>())
            }))
        }
        SystemId::CahnHilliard => {
            let e = spec.coef("epsilon");
            let l = f.k.iter().map(|k| c(-e * e * k.powi(4))).collect();
            (l, Box::new(|f: &Fourier, uh: &[Cplx]| {
                let u = f.inverse_real(uh);
                let mut w = f.forward_real(&u.iter().map(|v| v * v * v - v).collect::<Vec<_>>());
                w.iter_mut().zip(&f.k).for_each(|(w, k)| *w *= -k * k);
                w
            }))
        }
        _ => return Err(ReferenceError::Unsupported { system: spec.id, solver: "imex" }),
    };
    let uh = f.forward_real(&sample_initial(&f, even, u0));
    let interp = f.interpolator(xs);
    let mut state = Imex { f: &f, l, nonlinear, uh, t: 0.0 };
    let mut values = Vec::with_capacity(xs.len() * ts.len());
    march(ts, settings.dt, &mut state, |s| record_real(&s.uh, &interp, &mut values))?;
    let tag = if even { "imex-ars443-cosine" } else { "imex-ars443-fourier" };
    Ok(ReferenceField::new(spec.id, xs, ts, 1, values, tag))
}

// ---------------------------------------------------------------------------
// ETDRK4

const CONTOUR_POINTS: usize = 32;

struct EtdCoefficients {
    h: f64,
    e: Vec<Cplx>,
    e2: Vec<Cplx>,
    q: Vec<Cplx>,
    f1: Vec<Cplx>,
    f2: Vec<Cplx>,
    f3: Vec<Cplx>,
}

/// φ-function combinations by averaging over a circle around each `hL`,
/// which avoids cancellation for small `|hL|`.
fn etd_coefficients(l: &[Cplx], h: f64) -> EtdCoefficients {
    let roots: Vec<Cplx> = (1..=CONTOUR_POINTS)
        .map(|j| Cplx::from_polar(1.0, std::f64::consts::PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64))
        .collect();
    let n = l.len();
    let mut out = EtdCoefficients {
        h,
        e: Vec::with_capacity(n),
        e2: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        f1: Vec::with_capacity(n),
        f2: Vec::with_capacity(n),
        f3: Vec::with_capacity(n),
    };
    let real = l.iter().all(|v| v.im == 0.0);
    // Real symbols only need the upper half circle; the conjugate half mirrors it.
    let mean = |f: &dyn Fn(Cplx) -> Cplx, hl: Cplx| -> Cplx {
        if real {
            let s: f64 = roots.iter().map(|r| f(hl + r).re).sum();
            c(s / CONTOUR_POINTS as f64)
        } else {
            let s: Cplx = roots.iter().map(|r| f(hl + r) + f(hl + r.conj())).sum();
            s / (2 * CONTOUR_POINTS) as f64
        }
    };
    for &lk in l {
        let hl = lk * h;
        out.e.push((hl).exp());
        out.e2.push((hl * 0.5).exp());
        out.q.push(mean(&|z: Cplx| ((z * 0.5).exp() - 1.0) / z, hl) * h);
        out.f1.push(mean(&|z: Cplx| (-4.0 - z + z.exp() * (4.0 - 3.0 * z + z * z)) / (z * z * z), hl) * h);
        out.f2.push(mean(&|z: Cplx| (2.0 + z + z.exp() * (z - 2.0)) / (z * z * z), hl) * h);
        out.f3.push(mean(&|z: Cplx| (-4.0 - 3.0 * z - z * z + z.exp() * (4.0 - z)) / (z * z * z), hl) * h);
    }
    out
}

struct Etd<'a> {
    f: &'a Fourier,
    l: Vec<Cplx>,
    /// `-i k / 2`, the symbol of `-(u²/2)_x`.
    g: Vec<Cplx>,
    coef: Option<EtdCoefficients>,
    uh: Vec<Cplx>,
    t: f64,
}

impl Etd<'_> {
    fn nonlinear(&self, vh: &[Cplx]) -> Vec<Cplx> {
        let v = self.f.inverse_real(vh);
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let mut w = self.f.forward_real(&sq);
        w.iter_mut().zip(&self.g).for_each(|(w, g)| *w *= g);
        w
    }
}

impl Stepper for Etd<'_> {
    fn step(&mut self, h: f64) -> Result<(), ReferenceError> {
        if self.coef.as_ref().is_none_or(|k| (k.h - h).abs() > 1e-14 * h) {
            self.coef = Some(etd_coefficients(&self.l, h));
        }
        let k = self.coef.as_ref().expect("set above");
        let v = &self.uh;
        let nv = self.nonlinear(v);
        let a: Vec<Cplx> = (0..v.len()).map(|m| k.e2[m] * v[m] + k.q[m] * nv[m]).collect();
        let na = self.nonlinear(&a);
        let b: Vec<Cplx> = (0..v.len()).map(|m| k.e2[m] * v[m] + k.q[m] * na[m]).collect();
        let nb = self.nonlinear(&b);
        let cc: Vec<Cplx> = (0..v.len()).map(|m| k.e2[m] * a[m] + k.q[m] * (nb[m] * 2.0 - nv[m])).collect();
        let nc = self.nonlinear(&cc);
        let next: Vec<Cplx> = (0..v.len())
            .map(|m| k.e[m] * v[m] + nv[m] * k.f1[m] + (na[m] + nb[m]) * k.f2[m] * 2.0 + nc[m] * k.f3[m])
            .collect();
        self.uh = next;
        self.t += h;
        check(&self.uh, self.t)
    }
}

/// Fourth-order exponential time differencing for Kuramoto-Sivashinsky and KdV.
pub fn solve_etdrk4(
    spec: &SystemSpec,
    xs: &[f64],
    ts: &[f64],
    settings: SpectralSettings,
) -> Result<ReferenceField, ReferenceError> {
    let u0 = |x: f64| spec.initial_condition(x)[0];
    solve_etdrk4_from(spec, &u0, xs, ts, settings)
}

pub fn solve_etdrk4_from(
    spec: &SystemSpec,
    u0: &dyn Fn(f64) -> f64,
    xs: &[f64],
    ts: &[f64],
    settings: SpectralSettings,
) -> Result<ReferenceField, ReferenceError> {
    let (f, _) = grid_for(spec, settings.modes);
    let l: Vec<Cplx> = match spec.id {
        SystemId::KuramotoSivashinsky => f.k.iter().map(|k| c(k * k - k.powi(4))).collect(),
        // u_t = -u_xxx  gives  û_t = i k³ û
        SystemId::Kdv => f.ik().iter().map(|ik| -(ik * ik * ik)).collect(),
        _ => return Err(ReferenceError::Unsupported { system: spec.id, solver: "etdrk4" }),
    };
    let g = f.ik().into_iter().map(|ik| ik * -0.5).collect();
    let uh = f.forward_real(&sample_initial(&f, false, u0));
    let interp = f.interpolator(xs);
    let mut state = Etd { f: &f, l, g, coef: None, uh, t: 0.0 };
    let mut values = Vec::with_capacity(xs.len() * ts.len());
    march(ts, settings.dt, &mut state, |s| record_real(&s.uh, &interp, &mut values))?;
    Ok(ReferenceField::new(spec.id, xs, ts, 1, values, "etdrk4"))
}

// ---------------------------------------------------------------------------
// Split-step Fourier

struct SplitStep<'a> {
    f: &'a Fourier,
    u: Vec<Cplx>,
    t: f64,
}

impl SplitStep<'_> {
    /// Exact flow of `i u_t + |u|² u = 0`; it preserves `|u|`.
    fn nonlinear(&mut self, tau: f64) {
        for v in self.u.iter_mut() {
            *v *= Cplx::from_polar(1.0, v.norm_sqr() * tau);
        }
    }

    /// Exact flow of `i u_t + u_xx = 0`.
    fn linear(&mut self, tau: f64) {
        let mut uh = self.f.forward(&self.u);
        for (v, k) in uh.iter_mut().zip(&self.f.k) {
            *v *= Cplx::from_polar(1.0, -k * k * tau);
        }
        self.u = self.f.inverse(&uh);
    }
}

impl Stepper for SplitStep<'_> {
    fn step(&mut self, h: f64) -> Result<(), ReferenceError> {
        self.nonlinear(h / 2.0);
        self.linear(h);
        self.nonlinear(h / 2.0);
        self.t += h;
        if self.u.iter().any(|v| !(v.norm() <= BLOWUP)) {
            return Err(ReferenceError::Diverged { t: self.t });
        }
        Ok(())
    }

    fn advance(&mut self, h: f64, steps: usize) -> Result<(), ReferenceError> {
        // Adjacent nonlinear half steps merge into one full step.
        self.nonlinear(h / 2.0);
        for i in 0..steps {
            self.linear(h);
            self.nonlinear(if i + 1 == steps { h / 2.0 } else { h });
        }
        self.t += h * steps as f64;
        if self.u.iter().any(|v| !(v.norm() <= BLOWUP)) {
            return Err(ReferenceError::Diverged { t: self.t });
        }
        Ok(())
    }
}

/// Strang splitting for `i u_t + u_xx + |u|² u = 0`; channels are `(re, im)`.
pub fn solve_split_step(
    spec: &SystemSpec,
    xs: &[f64],
    ts: &[f64],
    settings: SpectralSettings,
) -> Result<ReferenceField, ReferenceError> {
    let u0 = |x: f64| {
        let v = spec.initial_condition(x);
        Cplx::new(v[0], v[1])
    };
    solve_split_step_from(spec, &u0, xs, ts, settings)
}

pub fn solve_split_step_from(
    spec: &SystemSpec,
    u0: &dyn Fn(f64) -> Complex64,
    xs: &[f64],
    ts: &[f64],
    settings: SpectralSettings,
) -> Result<ReferenceField, ReferenceError> {
    if spec.id != SystemId::Schrodinger {
        return Err(ReferenceError::Unsupported { system: spec.id, solver: "split-step" });
    }
    let (f, _) = grid_for(spec, settings.modes);
    let u = f.nodes().into_iter().map(u0).collect();
    let interp = f.interpolator(xs);
    let mut state = SplitStep { f: &f, u, t: 0.0 };
    let mut values = Vec::with_capacity(2 * xs.len() * ts.len());
    march(ts, settings.dt, &mut state, |s| {
        for v in interp.eval(&s.f.forward(&s.u)) {
            values.push(v.re);
            values.push(v.im);
        }
    })?;
    Ok(ReferenceField::new(spec.id, xs, ts, 2, values, "split-step"))
}

/// `∫ |u|² dx` of a periodic complex field sampled on its solver grid, for tests.
#[cfg(test)]
pub(crate) fn periodic_mass(u: &[Complex64], period: f64) -> f64 {
    u.iter().map(|v| v.norm_sqr()).sum::<f64>() * period / u.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64).collect()
    }

    #[test]
    fn zero_initial_data_stays_zero() {
        let zero = |_: f64| 0.0;
        let xs = grid(8, 0.0, 1.0);
        let ts = [0.1, 0.2];
        let s = SpectralSettings { modes: 32, dt: 1e-3 };
        for id in [SystemId::AllenCahn, SystemId::CahnHilliard] {
            let r = solve_spectral_imex_from(&SystemSpec::new(id), &zero, &xs, &ts, s).unwrap();
            assert!(r.values.iter().all(|v| *v == 0.0));
        }
        let ks = SystemSpec::new(SystemId::KuramotoSivashinsky);
        let r = solve_etdrk4_from(&ks, &zero, &grid(8, 0.0, 2.0 * PI), &ts, s).unwrap();
        assert!(r.values.iter().all(|v| *v == 0.0));
        let nls = SystemSpec::new(SystemId::Schrodinger);
        let r = solve_split_step_from(&nls, &|_| c(0.0), &xs, &ts, s).unwrap();
        assert!(r.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn allen_cahn_pure_phases_are_stationary() {
        let spec = SystemSpec::new(SystemId::AllenCahn);
        let xs = grid(8, 0.0, 1.0);
        for s in [1.0, -1.0] {
            let r = solve_spectral_imex_from(&spec, &|_| s, &xs, &[0.5], SpectralSettings { modes: 32, dt: 1e-3 })
                .unwrap();
            assert!(r.values.iter().all(|v| (v - s).abs() < 1e-13));
        }
    }

    #[test]
    fn ks_single_mode_follows_linear_growth() {
        let spec = SystemSpec::new(SystemId::KuramotoSivashinsky);
        let amp = 1e-10;
        let xs = [0.3, 1.7];
        let r = solve_etdrk4_from(&spec, &|x| amp * (2.0 * x).cos(), &xs, &[0.05], SpectralSettings { modes: 64, dt: 1e-3 })
            .unwrap();
        let growth = (4.0f64 - 16.0) * 0.05;
        for (i, x) in xs.iter().enumerate() {
            let want = amp * growth.exp() * (2.0 * x).cos();
            assert!((r.values[i] - want).abs() <= 1e-8 * amp, "{} vs {want}", r.values[i]);
        }
    }

    #[test]
    fn nls_plane_wave_is_tracked() {
        let spec = SystemSpec::new(SystemId::Schrodinger);
        let k = 2.0 * PI;
        let w = k * k - 1.0;
        let xs = grid(10, 0.0, 1.0);
        let ts = [0.05, 0.1];
        let r = solve_split_step_from(&spec, &|x| Cplx::from_polar(1.0, k * x), &xs, &ts, SpectralSettings { modes: 32, dt: 1e-3 })
            .unwrap();
        for (ti, t) in ts.iter().enumerate() {
            for (xi, x) in xs.iter().enumerate() {
                let want = Cplx::from_polar(1.0, k * x - w * t);
                assert!((r.at(ti, xi, 0) - want.re).abs() < 1e-6 && (r.at(ti, xi, 1) - want.im).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn split_step_conserves_mass() {
        let spec = SystemSpec::new(SystemId::Schrodinger);
        let f = Fourier::new(64, 0.0, 1.0);
        let u: Vec<Cplx> = f.nodes().iter().map(|&x| {
            let v = spec.initial_condition(x);
            Cplx::new(v[0], v[1])
        }).collect();
        let m0 = periodic_mass(&u, 1.0);
        let mut s = SplitStep { f: &f, u, t: 0.0 };
        s.advance(1e-4, 2000).unwrap();
        assert!((periodic_mass(&s.u, 1.0) - m0).abs() <= 1e-12 * m0);
    }
}
