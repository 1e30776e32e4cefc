//! Ground-truth fields: closed forms where they exist, otherwise spectral or
//! adaptive solvers whose discretisation error is estimated by self-convergence.

mod burgers;
mod cache;
mod fourier;
mod ode;
mod spectral;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::systems::exact::KDV_SPEED;
use crate::systems::{SystemId, SystemSpec, Window};

pub use burgers::{cole_hopf, solve_burgers_fd, solve_cole_hopf, HOPF_NODES};
pub use cache::{ReferenceCache, CACHE_ENV};
pub use ode::{dopri5, solve_ode_adaptive, solve_ode_adaptive_from};
pub use spectral::{
    solve_etdrk4, solve_etdrk4_from, solve_spectral_imex, solve_spectral_imex_from, solve_split_step,
    solve_split_step_from, SpectralSettings,
};

pub const ODE_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum ReferenceError {
    #[error("{solver} does not apply to {system}")]
    Unsupported { system: SystemId, solver: &'static str },
    #[error("solver diverged at t = {t}")]
    Diverged { t: f64 },
    #[error("reference cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("reference cache file is malformed: {0}")]
    Format(String),
}

/// Reference values on a tensor grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceField {
    pub system: SystemId,
    /// Positions; a single `0` for time-only systems.
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub channels: usize,
    /// `values[(ti * xs.len() + xi) * channels + ch]`
    pub values: Vec<f64>,
    pub solver: String,
    /// RMS change under refinement; zero for closed forms.
    pub error_estimate: f64,
}

impl ReferenceField {
    pub fn new(system: SystemId, xs: &[f64], ts: &[f64], channels: usize, values: Vec<f64>, solver: &str) -> Self {
        assert_eq!(values.len(), xs.len() * ts.len() * channels, "value count does not match the grid");
        Self {
            system,
            xs: xs.to_vec(),
            ts: ts.to_vec(),
            channels,
            values,
            solver: solver.to_string(),
            error_estimate: 0.0,
        }
    }

    pub fn at(&self, ti: usize, xi: usize, ch: usize) -> f64 {
        self.values[(ti * self.xs.len() + xi) * self.channels + ch]
    }

    /// State vector at one grid point.
    pub fn state(&self, ti: usize, xi: usize) -> &[f64] {
        let start = (ti * self.xs.len() + xi) * self.channels;
        &self.values[start..start + self.channels]
    }

    /// Root-mean-square difference to another field on the same grid.
    pub fn rms_diff(&self, other: &ReferenceField) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).powi(2)).sum();
        (s / self.values.len() as f64).sqrt()
    }
}

/// A fixed-step integrator driven by [`march`].
pub(crate) trait Stepper {
    fn step(&mut self, h: f64) -> Result<(), ReferenceError>;

    fn advance(&mut self, h: f64, steps: usize) -> Result<(), ReferenceError> {
        for _ in 0..steps {
            self.step(h)?;
        }
        Ok(())
    }
}

/// Steps from `t = 0` through the sorted output times, shortening the step so
/// every output time is hit exactly, and calls `record` at each.
pub(crate) fn march<S: Stepper>(
    ts: &[f64],
    dt: f64,
    state: &mut S,
    mut record: impl FnMut(&S),
) -> Result<(), ReferenceError> {
    let mut now = 0.0;
    for &t in ts {
        assert!(t >= now, "output times must be sorted and non-negative");
        let gap = t - now;
        if gap > 0.0 {
            let steps = ((gap / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            state.advance(gap / steps as f64, steps)?;
            now = t;
        }
        record(state);
    }
    Ok(())
}

/// Closed-form fields: Heat, Advection, and the KdV soliton of speed 2/3
/// (amplitude 2, centred at 0.5).
pub fn solve_analytic(spec: &SystemSpec, xs: &[f64], ts: &[f64]) -> Result<ReferenceField, ReferenceError> {
    let f: Box<dyn Fn(f64, f64) -> f64> = match spec.id {
        SystemId::Heat => {
            let a = spec.coef("alpha");
            Box::new(move |x, t| (PI * x).sin() * (-a * PI * PI * t).exp())
        }
        SystemId::Advection => {
            let c = spec.coef("c");
            Box::new(move |x, t| (2.0 * PI * (x - c * t)).sin())
        }
        SystemId::Kdv => {
            let c = KDV_SPEED;
            Box::new(move |x, t| 3.0 * c / ((c.sqrt() / 2.0 * (x - c * t - 0.5)).cosh().powi(2)))
        }
        _ => return Err(ReferenceError::Unsupported { system: spec.id, solver: "analytic" }),
    };
    let values = ts.iter().flat_map(|&t| xs.iter().map(|&x| f(x, t)).collect::<Vec<_>>()).collect();
    Ok(ReferenceField::new(spec.id, xs, ts, 1, values, "analytic"))
}

/// Whether the benchmark reference is meaningful on `window`: numerical
/// solvers live on the physical interval, closed forms extend to the line.
pub fn covers(spec: &SystemSpec, window: &Window) -> bool {
    let closed_form = matches!(spec.id, SystemId::Heat | SystemId::Advection | SystemId::Burgers | SystemId::Kdv);
    let (a, b) = spec.domain;
    spec.is_ode() || closed_form || (window.x.0 >= a && window.x.1 <= b)
}

/// Runs a fixed-step solver at `dt`, `dt/2` and `dt/4` and returns the finest
/// field. Its error is estimated by Richardson's formula with the observed
/// order, which stays honest when rough data reduce the nominal order.
fn self_converged(
    run: impl Fn(SpectralSettings) -> Result<ReferenceField, ReferenceError>,
    s: SpectralSettings,
) -> Result<ReferenceField, ReferenceError> {
    let at = |div: f64| run(SpectralSettings { dt: s.dt / div, ..s });
    let (r1, r2, r4) = (at(1.0)?, at(2.0)?, at(4.0)?);
    let (d1, d2) = (r1.rms_diff(&r2), r2.rms_diff(&r4));
    let error_estimate = if d2 == 0.0 {
        0.0
    } else if d1 > d2 {
        let p = (d1 / d2).log2();
        d2 / (2f64.powf(p) - 1.0)
    } else {
        d1.max(d2)
    };
    Ok(ReferenceField { error_estimate, ..r4 })
}

/// The benchmark reference for `spec` on the grid `xs × ts` (`xs` ignored for
/// time-only systems) with an estimate of its discretisation error.
///
/// KdV uses the closed-form soliton: the tabulated profile has a slope jump at
/// the periodic seam, and spectral runs from it do not self-converge.
pub fn solve_reference(spec: &SystemSpec, xs: &[f64], ts: &[f64]) -> Result<ReferenceField, ReferenceError> {
    let pair = |coarse: ReferenceField, fine: ReferenceField| {
        let err = coarse.rms_diff(&fine);
        ReferenceField { error_estimate: err, ..fine }
    };
    let s = SpectralSettings::default_for(spec.id);
    match spec.id {
        SystemId::Heat | SystemId::Advection | SystemId::Kdv => solve_analytic(spec, xs, ts),
        SystemId::Burgers => {
            Ok(pair(solve_cole_hopf(spec, xs, ts, HOPF_NODES)?, solve_cole_hopf(spec, xs, ts, 2 * HOPF_NODES - 1)?))
        }
        SystemId::AllenCahn | SystemId::ReactionDiffusion | SystemId::CahnHilliard => {
            self_converged(|s| solve_spectral_imex(spec, xs, ts, s), s)
        }
        SystemId::KuramotoSivashinsky => self_converged(|s| solve_etdrk4(spec, xs, ts, s), s),
        SystemId::Schrodinger => self_converged(|s| solve_split_step(spec, xs, ts, s), s),
        SystemId::Lorenz | SystemId::Seir => {
            Ok(pair(solve_ode_adaptive(spec, ts, ODE_TOL)?, solve_ode_adaptive(spec, ts, ODE_TOL * 1e-3)?))
        }
    }
}
