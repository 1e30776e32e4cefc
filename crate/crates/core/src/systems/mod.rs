//! Benchmark registry: residual operators, domains, initial and boundary
//! conditions, evaluation windows and collocation sampling.

mod collocation;
mod conditions;
pub mod exact;
mod residual;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{JetLayout, MultiIndex, Samples};
use crate::model::MlpParams;

pub use collocation::{latin_hypercube, sample_collocation, sample_collocation_with, CollocationCounts, CollocationSet};
pub use conditions::{bc_terms, ic_bc_loss, ic_terms, BcTerm};
pub use residual::{fields_from_tensor, fields_from_var, residual, residual_at, DerivFields};

/// Anything that yields a state field and its partials at space-time points.
pub trait FieldSource {
    fn fields(&self, xs: &[f64], ts: &[f64], wanted: &[MultiIndex]) -> DerivFields<Samples>;

    /// Plain values, one `Vec` per channel.
    fn values(&self, xs: &[f64], ts: &[f64]) -> Vec<Vec<f64>> {
        let f = self.fields(xs, ts, &[]);
        (0..f.channels()).map(|ch| f.get(ch, MultiIndex::VALUE).0).collect()
    }
}

impl FieldSource for MlpParams {
    fn fields(&self, xs: &[f64], ts: &[f64], wanted: &[MultiIndex]) -> DerivFields<Samples> {
        let layout = JetLayout::covering(wanted).expect("benchmark orders are at most 4");
        fields_from_tensor(&self.forward_batched(xs, ts, &layout), wanted)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SystemError {
    #[error("unknown system {0:?}")]
    Unknown(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemId {
    Heat,
    Advection,
    Burgers,
    AllenCahn,
    Kdv,
    ReactionDiffusion,
    CahnHilliard,
    KuramotoSivashinsky,
    Schrodinger,
    Lorenz,
    Seir,
}

impl SystemId {
    pub const ALL: [SystemId; 11] = [
        SystemId::Heat,
        SystemId::Advection,
        SystemId::Burgers,
        SystemId::AllenCahn,
        SystemId::Kdv,
        SystemId::ReactionDiffusion,
        SystemId::CahnHilliard,
        SystemId::KuramotoSivashinsky,
        SystemId::Schrodinger,
        SystemId::Lorenz,
        SystemId::Seir,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SystemId::Heat => "heat",
            SystemId::Advection => "advection",
            SystemId::Burgers => "burgers",
            SystemId::AllenCahn => "allen-cahn",
            SystemId::Kdv => "kdv",
            SystemId::ReactionDiffusion => "reaction-diffusion",
            SystemId::CahnHilliard => "cahn-hilliard",
            SystemId::KuramotoSivashinsky => "kuramoto-sivashinsky",
            SystemId::Schrodinger => "schrodinger",
            SystemId::Lorenz => "lorenz",
            SystemId::Seir => "seir",
        }
    }

    pub fn is_ode(&self) -> bool {
        matches!(self, SystemId::Lorenz | SystemId::Seir)
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemId {
    type Err = SystemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let id = match key.as_str() {
            "ks" => SystemId::KuramotoSivashinsky,
            "ac" => SystemId::AllenCahn,
            "ch" => SystemId::CahnHilliard,
            "rd" | "fisher" => SystemId::ReactionDiffusion,
            "nls" | "schroedinger" => SystemId::Schrodinger,
            other => *SystemId::ALL
                .iter()
                .find(|id| id.as_str() == other)
                .ok_or_else(|| SystemError::Unknown(s.to_string()))?,
        };
        Ok(id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BoundaryKind {
    /// `u = value` at both ends.
    Dirichlet { value: f64 },
    /// `u_x = 0` at both ends.
    Neumann,
    /// `u(a) = u(b)`, and `u_x(a) = u_x(b)` when `derivative` is set.
    Periodic { derivative: bool },
    /// Time-only systems.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conserved {
    /// `∫ u dx`, or `∫ |u|² dx` for the complex field.
    Mass,
    /// `∫ u² dx`
    Energy,
    /// Sum of all compartments.
    Population,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub name: String,
    pub x: (f64, f64),
    pub t: (f64, f64),
}

impl Window {
    fn new(name: &str, x: (f64, f64), t: (f64, f64)) -> Self {
        Self { name: name.to_string(), x, t }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub id: SystemId,
    pub state_dim: usize,
    /// Spatial interval; `(0, 0)` for time-only systems.
    pub domain: (f64, f64),
    pub train_window: Window,
    pub ood_time: Vec<Window>,
    pub ood_space: Option<Window>,
    pub coefficients: BTreeMap<String, f64>,
    pub ic_label: String,
    /// Initial state of time-only systems.
    pub x0: Vec<f64>,
    pub boundary: BoundaryKind,
    pub conserved: Vec<Conserved>,
    pub max_order: u8,
    pub channel_names: Vec<String>,
}

fn coeffs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl SystemSpec {
    pub fn by_name(name: &str) -> Result<Self, SystemError> {
        Ok(Self::new(name.parse()?))
    }

    pub fn new(id: SystemId) -> Self {
        use SystemId::*;
        let unit = (0.0, 1.0);
        let (state_dim, domain) = match id {
            Schrodinger => (2, unit),
            Lorenz => (3, (0.0, 0.0)),
            Seir => (4, (0.0, 0.0)),
            KuramotoSivashinsky => (1, (0.0, 2.0 * PI)),
            _ => (1, unit),
        };
        let coefficients = match id {
            Heat => coeffs(&[("alpha", 0.01)]),
            Advection => coeffs(&[("c", 1.0)]),
            Burgers => coeffs(&[("nu", 0.01)]),
            AllenCahn => coeffs(&[("epsilon", 0.01)]),
            ReactionDiffusion => coeffs(&[("D", 0.01)]),
            CahnHilliard => coeffs(&[("epsilon", 0.1)]),
            Lorenz => coeffs(&[("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)]),
            Seir => coeffs(&[("beta", 0.4), ("sigma", 0.2), ("gamma", 0.1), ("N", 1.0)]),
            Kdv | KuramotoSivashinsky | Schrodinger => BTreeMap::new(),
        };
        let ic_label = match id {
            Heat => r"\sin(\pi x)",
            Advection => r"\sin(2\pi x)",
            Burgers => r"-\sin(\pi x)",
            AllenCahn => r"x^2\cos(\pi x)",
            Kdv => r"2\,\text{sech}^2(x - 0.5)",
            ReactionDiffusion => r"\exp(-50(x-0.5)^2)",
            CahnHilliard => r"0.1\mathcal{N}(0,1) perturbation",
            KuramotoSivashinsky => r"\cos(x)(1+\sin(x))",
            Schrodinger => r"\text{sech}(x-0.5)e^{2ix}",
            Lorenz => "(1, 1, 1)",
            Seir => "(0.99, 0.01, 0, 0)",
        };
        let x0 = match id {
            Lorenz => vec![1.0, 1.0, 1.0],
            Seir => vec![0.99, 0.01, 0.0, 0.0],
            _ => Vec::new(),
        };
        let boundary = match id {
            Heat | Burgers => BoundaryKind::Dirichlet { value: 0.0 },
            AllenCahn | ReactionDiffusion => BoundaryKind::Neumann,
            CahnHilliard => BoundaryKind::Periodic { derivative: true },
            Advection | Kdv | KuramotoSivashinsky | Schrodinger => BoundaryKind::Periodic { derivative: false },
            Lorenz | Seir => BoundaryKind::None,
        };
        let conserved = match id {
            Advection | Kdv => vec![Conserved::Mass, Conserved::Energy],
            Schrodinger => vec![Conserved::Mass],
            Seir => vec![Conserved::Population],
            _ => Vec::new(),
        };
        let max_order = match id {
            Lorenz | Seir | Advection => 1,
            Kdv => 3,
            CahnHilliard | KuramotoSivashinsky => 4,
            _ => 2,
        };
        let channel_names: Vec<String> = match id {
            Schrodinger => vec!["re".into(), "im".into()],
            Lorenz => vec!["x".into(), "y".into(), "z".into()],
            Seir => vec!["S".into(), "E".into(), "I".into(), "R".into()],
            _ => vec!["u".into()],
        };

        let train_window = Window::new("in-domain", domain, unit);
        let (ood_time, ood_space) = if id.is_ode() {
            let table = if id == Lorenz { (1.0, 15.0) } else { (1.0, 3.0) };
            (vec![Window::new("ood-time-table", domain, table), Window::new("ood-time", domain, (3.0, 5.0))], None)
        } else {
            let mut time = Vec::new();
            if id != Advection {
                time.push(Window::new("ood-time-table", domain, (1.0, 3.0)));
            }
            time.push(Window::new("ood-time", domain, (3.0, 5.0)));
            (time, Some(Window::new("ood-space", (3.0, 5.0), unit)))
        };
        let mut spec = Self {
            id,
            state_dim,
            domain,
            train_window,
            ood_time,
            ood_space,
            coefficients,
            ic_label: ic_label.to_string(),
            x0,
            boundary,
            conserved,
            max_order,
            channel_names,
        };
        if id == Advection {
            // The table's extrapolation window for transport is spatial.
            spec.ood_time.insert(0, Window::new("ood-space-table", (1.0, 3.0), unit));
        }
        spec
    }

    pub fn registry() -> Vec<SystemSpec> {
        SystemId::ALL.iter().map(|&id| Self::new(id)).collect()
    }

    pub fn name(&self) -> &'static str {
        self.id.as_str()
    }

    pub fn is_ode(&self) -> bool {
        self.id.is_ode()
    }

    /// Network input dimension: `(x, t)` or `t`.
    pub fn input_dim(&self) -> usize {
        if self.is_ode() {
            1
        } else {
            2
        }
    }

    pub fn coef(&self, name: &str) -> f64 {
        *self.coefficients.get(name).unwrap_or_else(|| panic!("{} has no coefficient {name}", self.id))
    }

    /// Every evaluation window, training window first.
    pub fn windows(&self) -> Vec<Window> {
        let mut w = vec![self.train_window.clone()];
        w.extend(self.ood_time.iter().cloned());
        w.extend(self.ood_space.iter().cloned());
        w
    }

    pub fn window(&self, name: &str) -> Option<Window> {
        self.windows().into_iter().find(|w| w.name == name)
    }

    /// Partials the residual reads, value excluded.
    pub fn derivatives(&self) -> Vec<MultiIndex> {
        use SystemId::*;
        let mut d = vec![MultiIndex::T];
        match self.id {
            Lorenz | Seir => {}
            Advection => d.push(MultiIndex::X),
            Kdv => d.extend([MultiIndex::X, MultiIndex::XX, MultiIndex::XXX]),
            CahnHilliard | KuramotoSivashinsky => {
                d.extend([MultiIndex::X, MultiIndex::XX, MultiIndex::XXX, MultiIndex::XXXX])
            }
            _ => d.extend([MultiIndex::X, MultiIndex::XX]),
        }
        d
    }

    /// `u(x, 0)` for space-time systems, the initial state otherwise.
    pub fn initial_condition(&self, x: f64) -> Vec<f64> {
        use SystemId::*;
        match self.id {
            Heat => vec![(PI * x).sin()],
            Advection => vec![(2.0 * PI * x).sin()],
            Burgers => vec![-(PI * x).sin()],
            AllenCahn => vec![x * x * (PI * x).cos()],
            Kdv => vec![2.0 / (x - 0.5).cosh().powi(2)],
            ReactionDiffusion => vec![(-50.0 * (x - 0.5).powi(2)).exp()],
            CahnHilliard => vec![cahn_hilliard_ic(x)],
            KuramotoSivashinsky => vec![x.cos() * (1.0 + x.sin())],
            Schrodinger => {
                let a = 1.0 / (x - 0.5).cosh();
                vec![a * (2.0 * x).cos(), a * (2.0 * x).sin()]
            }
            Lorenz | Seir => self.x0.clone(),
        }
    }
}

const CH_MODES: usize = 8;
const CH_SEED: u64 = 0x5e_ed_c4;

/// Fourier coefficients `(a_k, b_k)`, `k = 1..=8`, of the phase-separation seed,
/// scaled so the field has standard deviation 0.1 over one period.
pub fn cahn_hilliard_modes() -> &'static [(f64, f64); CH_MODES] {
    static MODES: OnceLock<[(f64, f64); CH_MODES]> = OnceLock::new();
    MODES.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(CH_SEED);
        let mut m = [(0.0, 0.0); CH_MODES];
        for c in m.iter_mut() {
            *c = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        }
        let var: f64 = m.iter().map(|(a, b)| (a * a + b * b) / 2.0).sum();
        let s = 0.1 / var.sqrt();
        m.map(|(a, b)| (a * s, b * s))
    })
}

fn cahn_hilliard_ic(x: f64) -> f64 {
    cahn_hilliard_modes()
        .iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let w = 2.0 * PI * (k + 1) as f64 * x;
            a * w.cos() + b * w.sin()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_and_aliases() {
        assert_eq!(SystemSpec::registry().len(), 11);
        assert_eq!("ks".parse::<SystemId>().unwrap(), SystemId::KuramotoSivashinsky);
        assert_eq!("Allen_Cahn".parse::<SystemId>().unwrap(), SystemId::AllenCahn);
        assert!("wave".parse::<SystemId>().is_err());
        for id in SystemId::ALL {
            assert_eq!(id.as_str().parse::<SystemId>().unwrap(), id);
        }
    }

    #[test]
    fn table_entries() {
        let heat = SystemSpec::new(SystemId::Heat);
        assert_eq!(heat.ic_label, r"\sin(\pi x)");
        assert_eq!(heat.coef("alpha"), 0.01);
        let lorenz = SystemSpec::new(SystemId::Lorenz);
        assert_eq!((lorenz.coef("sigma"), lorenz.coef("rho"), lorenz.coef("beta")), (10.0, 28.0, 8.0 / 3.0));
        assert_eq!(lorenz.window("ood-time-table").unwrap().t, (1.0, 15.0));
        let seir = SystemSpec::new(SystemId::Seir);
        assert_eq!(seir.x0, vec![0.99, 0.01, 0.0, 0.0]);
        assert_eq!(SystemSpec::new(SystemId::KuramotoSivashinsky).domain.1, 2.0 * PI);
        assert_eq!(SystemSpec::new(SystemId::Advection).window("ood-space-table").unwrap().x, (1.0, 3.0));
        for s in SystemSpec::registry() {
            assert_eq!(s.train_window.t, (0.0, 1.0));
            assert!(s.max_order <= 4);
            let top = s.derivatives().iter().map(|m| m.order()).max().unwrap();
            assert_eq!(top, s.max_order, "{}", s.id);
            assert_eq!(s.initial_condition(0.3).len(), s.state_dim);
        }
    }

    #[test]
    fn cahn_hilliard_seed_has_target_spread() {
        let n = 4096;
        let vals: Vec<f64> = (0..n).map(|i| cahn_hilliard_ic(i as f64 / n as f64)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 0.1).abs() < 1e-12);
    }
}
