//! Property checks applied to finished runs in `--check` mode.

use spikelab::evaluation::RunReport;
use spikelab::systems::SystemId;
use spikelab::training::{Integrator, Variant};

pub const ABSCISSA_LIMIT: f64 = 0.01;
pub const POPULATION_LIMIT: f64 = 1e-3;
pub const HEAT_PHYSICS_LIMIT: f64 = 1e-3;
pub const HEAT_SOLUTION_LIMIT: f64 = 5e-2;
pub const COEF_LIMIT: f64 = 0.1;
pub const COEF_R2_MIN: f64 = 0.95;
pub const VALID_TIME_RATIO: f64 = 2.0;
/// Training length at which the accuracy checks apply.
pub const DESK_STEPS: usize = 5000;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

fn who(r: &RunReport) -> String {
    format!("{} {} seed {}", r.system, r.variant, r.seed)
}

pub fn stability(r: &RunReport) -> Option<Check> {
    let applies = r.variant.integrator() == Some(Integrator::Expm)
        && matches!(r.system, SystemId::Heat | SystemId::Burgers | SystemId::Lorenz);
    if !applies {
        return None;
    }
    let a = r.stability.value().map_or(f64::NAN, |s| s.abscissa);
    Some(Check::new(format!("stability: {}", who(r)), a <= ABSCISSA_LIMIT, format!("spectral abscissa {a:.3e}")))
}

pub fn population(r: &RunReport) -> Option<Check> {
    if r.system != SystemId::Seir {
        return None;
    }
    let s = r.conservation.value().and_then(|c| c.get("population").copied()).unwrap_or(f64::NAN);
    Some(Check::new(format!("conservation: {}", who(r)), s <= POPULATION_LIMIT, format!("population rel-std {s:.3e}")))
}

pub fn heat_accuracy(r: &RunReport) -> Option<Check> {
    if (r.system, r.variant) != (SystemId::Heat, Variant::PikeExpm) || r.steps < DESK_STEPS {
        return None;
    }
    let w = r.windows.iter().find(|w| w.window == "in-domain")?;
    let rms = w.solution_mse.value().map_or(f64::NAN, |m| m.sqrt());
    Some(Check::new(
        format!("accuracy: {}", who(r)),
        w.physics_mse <= HEAT_PHYSICS_LIMIT && rms <= HEAT_SOLUTION_LIMIT,
        format!("physics MSE {:.3e}, solution L2 error {rms:.3e}", w.physics_mse),
    ))
}

pub fn recovery(r: &RunReport) -> Option<Check> {
    let term = match (r.system, r.variant) {
        (SystemId::Heat, Variant::PikeExpm) => "u_xx",
        (SystemId::Burgers, Variant::PikeExpm) => "u*u_x",
        _ => return None,
    };
    if r.steps < DESK_STEPS {
        return None;
    }
    let c = r.coefficients.value()?;
    let t = c.term(term)?;
    Some(Check::new(
        format!("recovery: {}", who(r)),
        t.rel_error <= COEF_LIMIT && t.r_squared >= COEF_R2_MIN,
        format!("{term} {:.5} vs {:.5} ({:.2}%), R2 {:.4}", t.recovered, t.true_value, 100.0 * t.rel_error, t.r_squared),
    ))
}

/// Checks that concern a single report.
pub fn report_checks(r: &RunReport) -> Vec<Check> {
    [stability(r), population(r), heat_accuracy(r), recovery(r)].into_iter().flatten().collect()
}

fn partner<'a>(reports: &'a [RunReport], r: &RunReport, system: SystemId, variant: Variant) -> Option<&'a RunReport> {
    reports.iter().find(|o| o.system == system && o.variant == variant && o.seed == r.seed && o.steps == r.steps)
}

/// Checks that compare runs with matched seeds and steps.
pub fn cross_checks(reports: &[RunReport]) -> Vec<Check> {
    let mut out = Vec::new();
    for spike in reports.iter().filter(|r| (r.system, r.variant) == (SystemId::Burgers, Variant::SpikeExpm)) {
        let Some(pike) = partner(reports, spike, SystemId::Burgers, Variant::PikeExpm) else { continue };
        let (Some(s), Some(p)) = (spike.sparsity.value(), pike.sparsity.value()) else { continue };
        out.push(Check::new(
            format!("sparsity: burgers seed {}", spike.seed),
            s.nonzero_count <= p.nonzero_count && s.percent_zero >= p.percent_zero,
            format!(
                "nonzero {} vs {}, sparsity {:.1}% vs {:.1}% (spike-expm vs pike-expm)",
                s.nonzero_count, p.nonzero_count, s.percent_zero, p.percent_zero
            ),
        ));
    }
    for pike in reports.iter().filter(|r| (r.system, r.variant) == (SystemId::Lorenz, Variant::PikeEuler)) {
        let Some(pinn) = partner(reports, pike, SystemId::Lorenz, Variant::Pinn) else { continue };
        let (Some(a), Some(b)) = (pike.valid_time.value(), pinn.valid_time.value()) else { continue };
        out.push(Check::new(
            format!("valid time: lorenz seed {}", pike.seed),
            *a >= VALID_TIME_RATIO * b,
            format!("pike-euler {a:.4} vs pinn {b:.4}"),
        ));
    }
    out
}

pub fn all_checks(reports: &[RunReport]) -> Vec<Check> {
    let mut out: Vec<Check> = reports.iter().flat_map(report_checks).collect();
    out.extend(cross_checks(reports));
    out
}
