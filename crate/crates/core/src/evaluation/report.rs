use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::*;
use crate::model::Model;
use crate::reference::{covers, solve_reference, ReferenceCache, ReferenceError, ReferenceField};
use crate::systems::{CollocationSet, SystemId, SystemSpec, Window};
use crate::training::{LossBreakdown, Variant};

/// Bumped on any change to the report layout.
pub const REPORT_SCHEMA: u32 = 1;

/// Marker serialized as the string `"n/a"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NotApplicable {
    #[serde(rename = "n/a")]
    Na,
}

/// A metric value, or an explicit marker that it does not apply to the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reported<T> {
    Value(T),
    NotApplicable(NotApplicable),
}

impl<T> Reported<T> {
    pub const NA: Self = Reported::NotApplicable(NotApplicable::Na);

    pub fn value(&self) -> Option<&T> {
        match self {
            Reported::Value(v) => Some(v),
            Reported::NotApplicable(_) => None,
        }
    }
}

impl<T> From<Option<T>> for Reported<T> {
    fn from(v: Option<T>) -> Self {
        v.map_or(Self::NA, Reported::Value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub window: String,
    pub x: (f64, f64),
    pub t: (f64, f64),
    pub physics_mse: f64,
    pub solution_mse: Reported<f64>,
    /// Grid checked against the training points (training window only).
    pub disjoint: Reported<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub system: SystemId,
    pub variant: Variant,
    pub seed: u64,
    pub steps: usize,
    pub final_loss: Reported<LossBreakdown>,
    pub windows: Vec<WindowMetrics>,
    pub sparsity: Reported<SparsityStats>,
    pub stability: Reported<Stability>,
    pub valid_time: Reported<f64>,
    pub lyapunov_ratio: Reported<f64>,
    pub conservation: Reported<BTreeMap<String, f64>>,
    pub latent_correlations: Reported<Vec<LatentCorrelation>>,
    pub coefficients: Reported<CoefficientRecovery>,
    pub bound: Reported<BoundDiagnostic>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

/// Resolutions and reference sources for [`evaluate_run`].
#[derive(Clone, Debug)]
pub struct EvalOptions {
    /// Space × time nodes per window of a space-time system.
    pub grid: (usize, usize),
    /// Time nodes per window of a time-only system, and of the valid-time scan.
    pub ode_points: usize,
    pub cache: Option<ReferenceCache>,
    /// Extrapolation horizon of the bound diagnostic past the training window.
    pub bound_delta: f64,
    /// Side of the lattice of training-window nodes for `ε_K`.
    pub bound_nodes: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { grid: (100, 100), ode_points: 1000, cache: ReferenceCache::from_env(), bound_delta: 1.0, bound_nodes: 20 }
    }
}

impl EvalOptions {
    fn reference(&self, spec: &SystemSpec, xs: &[f64], ts: &[f64]) -> Result<ReferenceField, ReferenceError> {
        match &self.cache {
            Some(c) => c.get_or_solve(spec, xs, ts),
            None => solve_reference(spec, xs, ts),
        }
    }

    fn grid(&self, spec: &SystemSpec, window: &Window) -> MetricGrid {
        if spec.is_ode() {
            MetricGrid::with_resolution(spec, window, 1, self.ode_points)
        } else {
            MetricGrid::with_resolution(spec, window, self.grid.0, self.grid.1)
        }
    }
}

/// What the evaluator knows about how a model was trained.
#[derive(Clone, Copy, Debug)]
pub struct RunInfo<'a> {
    pub variant: Variant,
    pub seed: u64,
    pub steps: usize,
    pub final_loss: Option<LossBreakdown>,
    /// Training points, for the disjointness check.
    pub collocation: Option<&'a CollocationSet>,
}

/// Every metric of a trained model.
pub fn evaluate_run(
    model: &Model,
    spec: &SystemSpec,
    info: &RunInfo,
    opts: &EvalOptions,
) -> Result<RunReport, EvalError> {
    let RunInfo { variant, seed, steps, final_loss, collocation } = *info;
    let net = &model.solution;
    let mut windows = Vec::new();
    for w in spec.windows() {
        let mut grid = opts.grid(spec, &w);
        let training = w == spec.train_window;
        if let (true, Some(pts)) = (training, collocation) {
            grid.check_disjoint(pts, spec.is_ode());
        }
        let solution_mse = if covers(spec, &w) {
            Some(solution_mse(net, &opts.reference(spec, &grid.xs, &grid.ts)?))
        } else {
            None
        };
        windows.push(WindowMetrics {
            window: w.name.clone(),
            x: w.x,
            t: w.t,
            physics_mse: physics_mse(net, spec, &grid),
            solution_mse: solution_mse.into(),
            disjoint: grid.disjoint.into(),
        });
    }

    let koopman = variant.integrator().is_some();
    let a = &model.generator.a;
    let sparsity = koopman.then(|| sparsity_stats(a, SPARSITY_THRESHOLD));
    let stability = if koopman { Some(stability_check(a)?) } else { None };

    let (mut valid_time, mut lyapunov) = (None, None);
    if spec.is_ode() {
        let horizon = spec.windows().iter().map(|w| w.t.1).fold(0.0, f64::max);
        let ts = midpoints(0.0, horizon, opts.ode_points);
        let vt = valid_prediction_time(net, &opts.reference(spec, &[0.0], &ts)?, VALID_TIME_THRESHOLD);
        valid_time = Some(vt);
        lyapunov = lyapunov_ratio(spec, vt);
    }

    let conservation = (!spec.conserved.is_empty()).then(|| {
        let train = &spec.train_window;
        if spec.is_ode() {
            conservation_stats(net, spec, &[0.0], &midpoints(train.t.0, train.t.1, opts.ode_points))
        } else {
            let xs = linspace(train.x.0, train.x.1, opts.grid.0 + 1);
            conservation_stats(net, spec, &xs, &midpoints(train.t.0, train.t.1, opts.grid.1))
        }
    });

    let train_grid = opts.grid(spec, &spec.train_window);
    let latent = if koopman { latent_correlations(model, spec, &train_grid) } else { None };
    let coefficients = recover_coefficients(net, spec, &train_grid)?;

    let t_end = spec.train_window.t.1;
    let ahead = Window { name: "bound".into(), x: spec.domain, t: (t_end, t_end + opts.bound_delta) };
    let bound = if koopman && covers(spec, &ahead) {
        let xs = if spec.is_ode() { vec![0.0] } else { train_grid.xs.clone() };
        let reference = opts.reference(spec, &xs, &linspace(ahead.t.0, ahead.t.1, 21))?;
        Some(ood_bound_diagnostic(model, spec, &reference, &bound_nodes(spec, opts.bound_nodes))?)
    } else {
        None
    };

    Ok(RunReport {
        schema_version: REPORT_SCHEMA,
        system: spec.id,
        variant,
        seed,
        steps,
        final_loss: final_loss.into(),
        windows,
        sparsity: sparsity.into(),
        stability: stability.into(),
        valid_time: valid_time.into(),
        lyapunov_ratio: lyapunov.into(),
        conservation: conservation.into(),
        latent_correlations: latent.into(),
        coefficients: Reported::Value(coefficients),
        bound: bound.into(),
    })
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:e}"))
}

impl RunReport {
    /// Stable JSON rendering, newline-terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Every scalar metric under a flat name; `None` marks a family that does
    /// not apply to the run.
    pub fn flat_metrics(&self) -> Vec<(String, Option<f64>)> {
        let mut out: Vec<(String, Option<f64>)> = Vec::new();
        let mut put = |k: String, v: Option<f64>| out.push((k, v));
        put("final_loss".into(), self.final_loss.value().map(|l| l.total));
        for w in &self.windows {
            put(format!("physics_mse/{}", w.window), Some(w.physics_mse));
            put(format!("solution_mse/{}", w.window), w.solution_mse.value().copied());
        }
        put("sparsity_percent".into(), self.sparsity.value().map(|s| s.percent_zero));
        put("nonzero_count".into(), self.sparsity.value().map(|s| s.nonzero_count as f64));
        put("spectral_abscissa".into(), self.stability.value().map(|s| s.abscissa));
        put("valid_time".into(), self.valid_time.value().copied());
        put("lyapunov_ratio".into(), self.lyapunov_ratio.value().copied());
        match self.conservation.value() {
            Some(c) => c.iter().for_each(|(k, v)| put(format!("conservation/{k}"), Some(*v))),
            None => put("conservation".into(), None),
        }
        match self.latent_correlations.value() {
            Some(rows) => rows.iter().for_each(|r| put(format!("latent_corr/{}", r.target), Some(r.max_abs_corr))),
            None => put("latent_corr".into(), None),
        }
        if let Some(c) = self.coefficients.value() {
            for t in &c.terms {
                put(format!("coef/{}/{}", t.equation, t.term), Some(t.recovered));
                put(format!("coef_rel_error/{}/{}", t.equation, t.term), Some(t.rel_error));
            }
            put("coef_r2".into(), Some(c.r_squared));
        }
        match self.bound.value() {
            Some(b) => {
                put("bound/eps_k".into(), Some(b.eps_k));
                put("bound/rho0".into(), Some(b.rho0));
                put("bound/l_g".into(), Some(b.l_g));
                put("bound/value".into(), Some(b.bound_value));
                put("bound/observed".into(), Some(b.observed_error));
            }
            None => put("bound".into(), None),
        }
        out
    }

    /// `metric,value` rows of [`RunReport::flat_metrics`] behind a header
    /// naming the run and schema.
    pub fn metrics_csv(&self) -> String {
        let mut s = format!("# schema {} system {} variant {} seed {}\n", self.schema_version, self.system, self.variant, self.seed);
        s.push_str("metric,value\n");
        for (k, v) in self.flat_metrics() {
            let _ = writeln!(s, "{k},{}", fmt_value(v));
        }
        s
    }
}
