//! Metrics on trained artifacts: residual and solution errors per window,
//! generator sparsity and stability, valid prediction time, conservation,
//! latent correlations, coefficient recovery and the extrapolation bound.

mod recovery;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Samples;
use crate::linalg::{eigenvalues, DenseMatrix, LinalgError};
use crate::model::{embed, evaluate_solution, Model};
use crate::reference::ReferenceField;
use crate::systems::{residual, CollocationSet, Conserved, FieldSource, SystemId, SystemSpec, Window};

pub use recovery::{recover_coefficients, regression_problems, CoefficientRecovery, RecoveredTerm};
pub use report::{evaluate_run, EvalError, EvalOptions, NotApplicable, Reported, RunInfo, RunReport, WindowMetrics, REPORT_SCHEMA};

pub const SPARSITY_THRESHOLD: f64 = 1e-4;
pub const STABILITY_THRESHOLD: f64 = 0.01;
pub const VALID_TIME_THRESHOLD: f64 = 0.5;
pub const LORENZ_LYAPUNOV_TIME: f64 = 1.1;
/// Below this `|ρ₀|` the bound uses its `ρ₀ → 0` limit.
pub const RHO_LIMIT: f64 = 1e-8;
/// Step of the central difference for `ż`.
pub const ZDOT_STEP: f64 = 1e-3;

/// Uniform evaluation grid over one window, offset by half a cell so no node
/// lands on a lattice shared with the collocation sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricGrid {
    pub window: Window,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    /// Whether no node coincides with a training point; `None` until checked.
    pub disjoint: Option<bool>,
}

/// `n` cell midpoints of `[a, b]`.
pub fn midpoints(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64).collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl MetricGrid {
    /// 100 × 100 for space-time systems, 1000 times for time-only ones.
    pub fn new(spec: &SystemSpec, window: &Window) -> Self {
        if spec.is_ode() {
            Self::with_resolution(spec, window, 1, 1000)
        } else {
            Self::with_resolution(spec, window, 100, 100)
        }
    }

    pub fn with_resolution(spec: &SystemSpec, window: &Window, nx: usize, nt: usize) -> Self {
        let xs = if spec.is_ode() { vec![0.0] } else { midpoints(window.x.0, window.x.1, nx) };
        Self { window: window.clone(), xs, ts: midpoints(window.t.0, window.t.1, nt), disjoint: None }
    }

    /// Records whether any collocation point falls on a grid node.
    pub fn check_disjoint(&mut self, pts: &CollocationSet, time_only: bool) {
        let on_grid = |x: f64, t: f64| self.ts.contains(&t) && (time_only || self.xs.contains(&x));
        let hit = pts.interior_x.iter().zip(&pts.interior_t).any(|(&x, &t)| on_grid(x, t))
            || pts.ic_x.iter().any(|&x| on_grid(x, 0.0))
            || pts.bc_t.iter().any(|&t| on_grid(self.window.x.0, t) || on_grid(self.window.x.1, t));
        self.disjoint = Some(!hit);
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened nodes, time-major (`ti * nx + xi`) like a [`ReferenceField`].
    pub fn points(&self) -> (Vec<f64>, Vec<f64>) {
        self.ts.iter().flat_map(|&t| self.xs.iter().map(move |&x| (x, t))).unzip()
    }
}

/// Mean over the grid of `‖N[u]‖²`, summed over equations.
pub fn physics_mse(src: &impl FieldSource, spec: &SystemSpec, grid: &MetricGrid) -> f64 {
    let (xs, ts) = grid.points();
    let fields = src.fields(&xs, &ts, &spec.derivatives());
    residual(spec, &fields).iter().map(Samples::mean_square).sum()
}

/// Mean over the reference nodes of `‖u_θ − u*‖²`, summed over channels.
pub fn solution_mse(src: &impl FieldSource, reference: &ReferenceField) -> f64 {
    let nx = reference.xs.len();
    let (xs, ts): (Vec<f64>, Vec<f64>) =
        reference.ts.iter().flat_map(|&t| reference.xs.iter().map(move |&x| (x, t))).unzip();
    let values = src.values(&xs, &ts);
    let mut sum = 0.0;
    for (p, _) in xs.iter().enumerate() {
        let state = reference.state(p / nx, p % nx);
        sum += state.iter().enumerate().map(|(c, r)| (values[c][p] - r).powi(2)).sum::<f64>();
    }
    sum / xs.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub percent_zero: f64,
    pub nonzero_count: usize,
    pub total: usize,
}

/// Entries with `|a| < threshold` count as zero.
pub fn sparsity_stats(a: &DenseMatrix, threshold: f64) -> SparsityStats {
    let total = a.as_slice().len();
    let nonzero_count = a.as_slice().iter().filter(|v| !(v.abs() < threshold)).count();
    let percent_zero = if total == 0 { 100.0 } else { 100.0 * (total - nonzero_count) as f64 / total as f64 };
    SparsityStats { percent_zero, nonzero_count, total }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub abscissa: f64,
    pub stable: bool,
}

/// Spectral abscissa and whether it is at most [`STABILITY_THRESHOLD`].
pub fn stability_check(a: &DenseMatrix) -> Result<Stability, LinalgError> {
    let abscissa = eigenvalues(a)?.spectral_abscissa;
    Ok(Stability { abscissa, stable: abscissa <= STABILITY_THRESHOLD })
}

/// First reference time at which `‖x̂ − x*‖ / ‖x*‖ > threshold`, or the last
/// reference time when the prediction never degrades that far.
pub fn valid_prediction_time(src: &impl FieldSource, reference: &ReferenceField, threshold: f64) -> f64 {
    let ts = &reference.ts;
    let values = src.values(&vec![0.0; ts.len()], ts);
    for (ti, &t) in ts.iter().enumerate() {
        let truth = reference.state(ti, 0);
        let err = truth.iter().enumerate().map(|(c, r)| (values[c][ti] - r).powi(2)).sum::<f64>().sqrt();
        let norm = truth.iter().map(|r| r * r).sum::<f64>().sqrt();
        if err > threshold * norm {
            return t;
        }
    }
    *ts.last().expect("reference has times")
}

/// Valid time in Lyapunov times, for systems with a known Lyapunov time.
pub fn lyapunov_ratio(spec: &SystemSpec, valid_time: f64) -> Option<f64> {
    (spec.id == SystemId::Lorenz).then(|| valid_time / LORENZ_LYAPUNOV_TIME)
}

/// `std / |mean|` with the population standard deviation.
pub fn relative_std(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let std = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        0.0
    } else {
        std / mean.abs()
    }
}

fn trapezoid(xs: &[f64], f: &[f64]) -> f64 {
    xs.windows(2).zip(f.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Relative standard deviation over the grid's time slices of each declared
/// conserved quantity. Spatial integrals use the trapezoidal rule on `xs`,
/// which should include the domain ends.
pub fn conservation_stats(src: &impl FieldSource, spec: &SystemSpec, xs: &[f64], ts: &[f64]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if spec.conserved.is_empty() {
        return out;
    }
    let nx = xs.len();
    let (px, pt): (Vec<f64>, Vec<f64>) = ts.iter().flat_map(|&t| xs.iter().map(move |&x| (x, t))).unzip();
    let values = src.values(&px, &pt);
    let slice = |ti: usize, f: &dyn Fn(usize) -> f64| -> f64 {
        let g: Vec<f64> = (0..nx).map(|xi| f(ti * nx + xi)).collect();
        if spec.is_ode() {
            g[0]
        } else {
            trapezoid(xs, &g)
        }
    };
    for q in &spec.conserved {
        let density: Box<dyn Fn(usize) -> f64> = match q {
            Conserved::Mass if spec.state_dim == 2 => Box::new(|p| values[0][p].powi(2) + values[1][p].powi(2)),
            Conserved::Mass => Box::new(|p| values[0][p]),
            Conserved::Energy => Box::new(|p| values[0][p].powi(2)),
            Conserved::Population => Box::new(|p| values.iter().map(|c| c[p]).sum()),
        };
        let series: Vec<f64> = (0..ts.len()).map(|ti| slice(ti, &*density)).collect();
        let name = match q {
            Conserved::Mass => "mass",
            Conserved::Energy => "energy",
            Conserved::Population => "population",
        };
        out.insert(name.to_string(), relative_std(&series));
    }
    out
}

/// Pearson correlation, `None` when either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCorrelation {
    pub target: String,
    pub max_abs_corr: f64,
    /// Index of the best-matching latent feature.
    pub feature: Option<usize>,
    /// Set when the target or some feature had zero variance; those pairs count as 0.
    pub zero_variance: bool,
}

/// Best `|corr|` over `features` for each named target.
pub fn correlation_table(targets: &[(&str, Vec<f64>)], features: &[Vec<f64>]) -> Vec<LatentCorrelation> {
    targets
        .iter()
        .map(|(name, target)| {
            let mut row =
                LatentCorrelation { target: name.to_string(), max_abs_corr: 0.0, feature: None, zero_variance: false };
            for (k, f) in features.iter().enumerate() {
                match pearson(target, f) {
                    Some(r) if r.abs() > row.max_abs_corr || row.feature.is_none() => {
                        row.max_abs_corr = r.abs();
                        row.feature = Some(k);
                    }
                    Some(_) => {}
                    None => row.zero_variance = true,
                }
            }
            row
        })
        .collect()
}

/// Correlations of each latent observable with `u, u_x, u_xx, u_t, u u_x, u³`,
/// the targets taken by central differences of the network on the grid's
/// interior nodes. `None` without a latent branch or a spatial variable.
pub fn latent_correlations(model: &Model, spec: &SystemSpec, grid: &MetricGrid) -> Option<Vec<LatentCorrelation>> {
    let latent = model.embedding.latent.as_ref()?;
    let (nx, nt) = (grid.xs.len(), grid.ts.len());
    if spec.is_ode() || nx < 3 || nt < 3 {
        return None;
    }
    let (xs, ts) = grid.points();
    let values = model.solution.values(&xs, &ts);
    let u = |xi: usize, ti: usize| values[0][ti * nx + xi];
    let (dx, dt) = (grid.xs[1] - grid.xs[0], grid.ts[1] - grid.ts[0]);
    let mut cols: [Vec<f64>; 6] = Default::default();
    let mut features = vec![Vec::new(); latent.output_dim()];
    for ti in 1..nt - 1 {
        for xi in 1..nx - 1 {
            let v = u(xi, ti);
            let ux = (u(xi + 1, ti) - u(xi - 1, ti)) / (2.0 * dx);
            let uxx = (u(xi + 1, ti) - 2.0 * v + u(xi - 1, ti)) / (dx * dx);
            let ut = (u(xi, ti + 1) - u(xi, ti - 1)) / (2.0 * dt);
            for (c, q) in cols.iter_mut().zip([v, ux, uxx, ut, v * ux, v * v * v]) {
                c.push(q);
            }
            let state: Vec<f64> = values.iter().map(|c| c[ti * nx + xi]).collect();
            for (f, z) in features.iter_mut().zip(latent.forward_point(&state)) {
                f.push(z);
            }
        }
    }
    let [c0, c1, c2, c3, c4, c5] = cols;
    let targets = [("u", c0), ("u_x", c1), ("u_xx", c2), ("u_t", c3), ("u*u_x", c4), ("u^3", c5)];
    Some(correlation_table(&targets, &features))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostic {
    pub eps_k: f64,
    pub rho0: f64,
    /// Product of the solution network's layer spectral norms.
    pub l_g: f64,
    pub delta: f64,
    /// Error at the end of the training window.
    pub training_error: f64,
    pub bound_value: f64,
    /// Largest error over `[T, T + δ]`.
    pub observed_error: f64,
    pub satisfied: bool,
}

/// `(e^{ρ₀δ} − 1)/ρ₀`, or `δ` when `|ρ₀|` is below [`RHO_LIMIT`].
pub fn growth_factor(rho0: f64, delta: f64) -> f64 {
    if rho0.abs() < RHO_LIMIT {
        delta
    } else {
        (rho0 * delta).exp_m1() / rho0
    }
}

/// `e_train + L_g ε_K (e^{ρ₀δ} − 1)/ρ₀`
pub fn ood_bound(l_g: f64, eps_k: f64, rho0: f64, delta: f64, training_error: f64) -> f64 {
    training_error + l_g * eps_k * growth_factor(rho0, delta)
}

/// RMS over `nodes` of `‖A z − ż‖`, with `ż` by central differences along t.
pub fn koopman_residual_rms(model: &Model, nodes: &[(f64, f64)]) -> f64 {
    let at = |x: f64, t: f64| embed(&evaluate_solution(&model.solution, x, t), &model.embedding);
    let a = &model.generator.a;
    let h = ZDOT_STEP;
    let sum: f64 = nodes
        .iter()
        .map(|&(x, t)| {
            let z = at(x, t);
            let (zp, zm) = (at(x, t + h), at(x, t - h));
            a.matvec(&z).iter().enumerate().map(|(i, az)| (az - (zp[i] - zm[i]) / (2.0 * h)).powi(2)).sum::<f64>()
        })
        .sum();
    (sum / nodes.len() as f64).sqrt()
}

/// L² norm over space (Euclidean for time-only systems) of the error at each
/// reference time.
fn error_profile(src: &impl FieldSource, reference: &ReferenceField, spec: &SystemSpec) -> Vec<f64> {
    let nx = reference.xs.len();
    let (xs, ts): (Vec<f64>, Vec<f64>) =
        reference.ts.iter().flat_map(|&t| reference.xs.iter().map(move |&x| (x, t))).unzip();
    let values = src.values(&xs, &ts);
    let width = spec.domain.1 - spec.domain.0;
    (0..reference.ts.len())
        .map(|ti| {
            let sq: f64 = (0..nx)
                .map(|xi| {
                    let p = ti * nx + xi;
                    reference.state(ti, xi).iter().enumerate().map(|(c, r)| (values[c][p] - r).powi(2)).sum::<f64>()
                })
                .sum();
            if spec.is_ode() {
                sq.sqrt()
            } else {
                (sq / nx as f64 * width).sqrt()
            }
        })
        .collect()
}

/// Evaluates the extrapolation bound against the observed error on
/// `reference`, whose first time is the end of the training window and whose
/// last time is `T + δ`. `nodes` are the training-window points for `ε_K`.
pub fn ood_bound_diagnostic(
    model: &Model,
    spec: &SystemSpec,
    reference: &ReferenceField,
    nodes: &[(f64, f64)],
) -> Result<BoundDiagnostic, LinalgError> {
    let eps_k = koopman_residual_rms(model, nodes);
    let rho0 = stability_check(&model.generator.a)?.abscissa;
    let l_g = model.solution.layer_spectral_norms().iter().product();
    let delta = reference.ts.last().expect("reference has times") - reference.ts[0];
    let errors = error_profile(&model.solution, reference, spec);
    let training_error = errors[0];
    let observed_error = errors.iter().copied().fold(0.0, f64::max);
    let bound_value = ood_bound(l_g, eps_k, rho0, delta, training_error);
    Ok(BoundDiagnostic {
        eps_k,
        rho0,
        l_g,
        delta,
        training_error,
        bound_value,
        observed_error,
        satisfied: observed_error <= bound_value,
    })
}

/// Training-window nodes for `ε_K`: an `n × n` midpoint lattice, or `n²` times.
pub fn bound_nodes(spec: &SystemSpec, n: usize) -> Vec<(f64, f64)> {
    let w = &spec.train_window;
    if spec.is_ode() {
        return midpoints(w.t.0, w.t.1, n * n).into_iter().map(|t| (0.0, t)).collect();
    }
    let xs = midpoints(w.x.0, w.x.1, n);
    midpoints(w.t.0, w.t.1, n).into_iter().flat_map(|t| xs.iter().map(move |&x| (x, t))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Jet, MultiIndex};
    use crate::model::{init_params, ModelConfig};
    use crate::reference::solve_reference;
    use crate::systems::exact::{surrogate_field, JetField};
    use std::f64::consts::PI;

    #[test]
    fn grid_sizes_and_offsets() {
        let heat = SystemSpec::new(SystemId::Heat);
        let g = MetricGrid::new(&heat, &heat.train_window);
        assert_eq!((g.xs.len(), g.ts.len()), (100, 100));
        assert!((g.xs[0] - 0.005).abs() < 1e-15 && (g.ts[99] - 0.995).abs() < 1e-15);
        let lorenz = SystemSpec::new(SystemId::Lorenz);
        assert_eq!(MetricGrid::new(&lorenz, &lorenz.train_window).len(), 1000);
    }

    #[test]
    fn held_out_grid_misses_the_collocation_points() {
        let spec = SystemSpec::new(SystemId::Burgers);
        let mut g = MetricGrid::new(&spec, &spec.train_window);
        g.check_disjoint(&crate::systems::sample_collocation(&spec, 0), false);
        assert_eq!(g.disjoint, Some(true));
    }

    #[test]
    fn heat_surrogate_has_no_residual() {
        let spec = SystemSpec::new(SystemId::Heat);
        let src = surrogate_field(&spec).unwrap();
        for w in spec.windows() {
            assert!(physics_mse(&src, &spec, &MetricGrid::new(&spec, &w)) <= 1e-10, "{}", w.name);
        }
    }

    #[test]
    fn zero_network_solves_advection() {
        let spec = SystemSpec::new(SystemId::Advection);
        let zero = JetField(|_x: Jet, _t: Jet| vec![Jet::constant(0.0)]);
        assert_eq!(physics_mse(&zero, &spec, &MetricGrid::new(&spec, &spec.train_window)), 0.0);
    }

    #[test]
    fn solution_error_of_zero_against_heat_at_start() {
        let spec = SystemSpec::new(SystemId::Heat);
        let xs = midpoints(0.0, 1.0, 100);
        let r = solve_reference(&spec, &xs, &[0.0]).unwrap();
        let zero = JetField(|_x: Jet, _t: Jet| vec![Jet::constant(0.0)]);
        assert!((solution_mse(&zero, &r) - 0.5).abs() < 1e-12);
        let exact = JetField(|x: Jet, _t: Jet| vec![(x * PI).sin()]);
        assert!(solution_mse(&exact, &r) < 1e-30);
    }

    #[test]
    fn sparsity_counts_the_threshold_as_nonzero() {
        let mut a = DenseMatrix::zeros(64, 64);
        assert_eq!(sparsity_stats(&a, SPARSITY_THRESHOLD), SparsityStats { percent_zero: 100.0, nonzero_count: 0, total: 4096 });
        a[(0, 0)] = 1e-4;
        a[(3, 1)] = -0.2;
        a[(5, 9)] = 2.0;
        a[(7, 7)] = 0.99e-4;
        let s = sparsity_stats(&a, SPARSITY_THRESHOLD);
        assert_eq!(s.nonzero_count, 3);
        assert_eq!(s.percent_zero / 100.0 + s.nonzero_count as f64 / s.total as f64, 1.0);
    }

    #[test]
    fn stability_threshold() {
        assert!(stability_check(&DenseMatrix::zeros(4, 4)).unwrap().stable);
        let a = DenseMatrix::from_diag(&[0.2112, -1.0]);
        let s = stability_check(&a).unwrap();
        assert!(!s.stable && (s.abscissa - 0.2112).abs() < 1e-12);
        // Char-poly oracle: [[a, b], [c, d]] has Re λ = (a + d)/2 when the discriminant is negative.
        let m = DenseMatrix::from_rows(&[&[0.3, -2.0], &[1.5, -0.1]]);
        assert!((stability_check(&m).unwrap().abscissa - 0.1).abs() <= 1e-8);
    }

    fn lorenz_reference(ts: &[f64]) -> ReferenceField {
        solve_reference(&SystemSpec::new(SystemId::Lorenz), &[0.0], ts).unwrap()
    }

    #[test]
    fn valid_time_extremes() {
        let ts = midpoints(0.0, 2.0, 200);
        let r = lorenz_reference(&ts);
        let zero = JetField(|_x: Jet, _t: Jet| vec![Jet::constant(0.0); 3]);
        assert_eq!(valid_prediction_time(&zero, &r, 0.5), ts[0]);
        let exact = TableField(r.clone());
        assert_eq!(valid_prediction_time(&exact, &r, 0.5), *ts.last().unwrap());
        assert!((lyapunov_ratio(&SystemSpec::new(SystemId::Lorenz), 2.2).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn valid_time_grows_with_the_threshold() {
        let ts = midpoints(0.0, 3.0, 300);
        let r = lorenz_reference(&ts);
        // The state one step late: a perturbation that grows along the trajectory.
        let lagged = TableField(ReferenceField { values: r.values[3..].iter().chain(&r.values[..3]).copied().collect(), ..r.clone() });
        let times: Vec<f64> = [0.05, 0.1, 0.5, 1.0].iter().map(|&th| valid_prediction_time(&lagged, &r, th)).collect();
        for w in times.windows(2) {
            assert!(w[0] <= w[1], "{times:?}");
        }
    }

    /// Replays the reference at its own nodes.
    struct TableField(ReferenceField);

    impl FieldSource for TableField {
        fn fields(&self, _xs: &[f64], ts: &[f64], _wanted: &[MultiIndex]) -> crate::systems::DerivFields<Samples> {
            let r = &self.0;
            let data = (0..r.channels)
                .map(|c| {
                    let col = ts
                        .iter()
                        .map(|t| r.at(r.ts.iter().position(|s| s == t).expect("reference node"), 0, c))
                        .collect();
                    vec![Samples(col)]
                })
                .collect();
            crate::systems::DerivFields::new(vec![MultiIndex::VALUE], data)
        }
    }

    #[test]
    fn conservation_of_constant_and_exact_fields() {
        let spec = SystemSpec::new(SystemId::Advection);
        let xs = linspace(0.0, 1.0, 101);
        let ts = midpoints(0.0, 1.0, 100);
        let one = JetField(|_x: Jet, _t: Jet| vec![Jet::constant(1.0)]);
        let c = conservation_stats(&one, &spec, &xs, &ts);
        assert_eq!(c["mass"], 0.0);
        assert_eq!(c["energy"], 0.0);
        let exact = surrogate_field(&spec).unwrap();
        assert!(conservation_stats(&exact, &spec, &xs, &ts)["energy"] < 1e-12);

        let seir = SystemSpec::new(SystemId::Seir);
        let ts = midpoints(0.0, 5.0, 1000);
        let r = solve_reference(&seir, &[0.0], &ts).unwrap();
        let pop = conservation_stats(&TableField(r), &seir, &[0.0], &ts)["population"];
        assert!(pop <= 1e-9, "{pop:e}");
        assert!(conservation_stats(&one, &SystemSpec::new(SystemId::Heat), &xs, &ts).is_empty());
    }

    #[test]
    fn correlation_guards_and_duplicates() {
        let u: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let features = vec![vec![2.0; 50], u.iter().map(|v| -3.0 * v + 1.0).collect()];
        let t = correlation_table(&[("u", u.clone()), ("flat", vec![1.0; 50])], &features);
        assert!((t[0].max_abs_corr - 1.0).abs() < 1e-12 && t[0].feature == Some(1) && t[0].zero_variance);
        assert_eq!((t[1].max_abs_corr, t[1].feature), (0.0, None));
    }

    #[test]
    fn latent_table_has_every_target() {
        let spec = SystemSpec::new(SystemId::Heat);
        let mut config = ModelConfig::new(2, 1);
        config.hidden = vec![8];
        config.latent_hidden = vec![4];
        config.observable_dim = 6;
        let model = init_params(&config, 0);
        let grid = MetricGrid::with_resolution(&spec, &spec.train_window, 12, 12);
        let table = latent_correlations(&model, &spec, &grid).unwrap();
        let names: Vec<&str> = table.iter().map(|r| r.target.as_str()).collect();
        assert_eq!(names, ["u", "u_x", "u_xx", "u_t", "u*u_x", "u^3"]);
        assert!(table.iter().all(|r| (0.0..=1.0 + 1e-12).contains(&r.max_abs_corr)));
    }

    #[test]
    fn bound_branches() {
        assert_eq!(ood_bound(2.0, 0.5, 0.0, 0.3, 0.0), 2.0 * 0.5 * 0.3);
        assert_eq!(ood_bound(2.0, 0.0, 0.7, 0.3, 0.04), 0.04);
        let general = (1e-8f64 * 0.5).exp_m1() / 1e-8;
        assert!((general - growth_factor(0.99e-8, 0.5)).abs() <= 1e-6 * general);
        let mut last = 0.0;
        for k in 1..50 {
            let b = ood_bound(1.5, 0.1, -0.3, k as f64 * 0.1, 0.01);
            assert!(b > last && b.is_finite());
            last = b;
        }
    }
}
