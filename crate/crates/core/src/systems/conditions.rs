use crate::autodiff::{Field, MultiIndex, Samples};

use super::{BoundaryKind, CollocationSet, DerivFields, FieldSource, SystemSpec};

/// One boundary mismatch batch; the loss adds `weight · mean(mismatch²)`.
#[derive(Clone, Debug)]
pub struct BcTerm<T> {
    pub mismatch: T,
    pub weight: f64,
}

impl SystemSpec {
    /// Partials the boundary conditions read, value excluded.
    pub fn boundary_derivatives(&self) -> Vec<MultiIndex> {
        match self.boundary {
            BoundaryKind::Neumann | BoundaryKind::Periodic { derivative: true } => vec![MultiIndex::X],
            _ => Vec::new(),
        }
    }
}

/// `u(x, 0) - u₀(x)` per channel. `lift` turns target values into the field type.
pub fn ic_terms<T: Field>(
    spec: &SystemSpec,
    xs: &[f64],
    at_ic: &DerivFields<T>,
    lift: impl Fn(Vec<f64>) -> T,
) -> Vec<T> {
    let targets: Vec<Vec<f64>> = xs.iter().map(|&x| spec.initial_condition(x)).collect();
    (0..spec.state_dim)
        .map(|ch| at_ic.get(ch, MultiIndex::VALUE) - lift(targets.iter().map(|v| v[ch]).collect()))
        .collect()
}

/// Boundary mismatches from fields at the left and right ends at matching times.
///
/// Dirichlet and Neumann average over both ends; periodic pairs count once.
pub fn bc_terms<T: Field>(spec: &SystemSpec, left: &DerivFields<T>, right: &DerivFields<T>) -> Vec<BcTerm<T>> {
    let mut out = Vec::new();
    for ch in 0..spec.state_dim {
        match spec.boundary {
            BoundaryKind::Dirichlet { value } => {
                for side in [left, right] {
                    out.push(BcTerm { mismatch: side.get(ch, MultiIndex::VALUE) - value, weight: 0.5 });
                }
            }
            BoundaryKind::Neumann => {
                for side in [left, right] {
                    out.push(BcTerm { mismatch: side.get(ch, MultiIndex::X), weight: 0.5 });
                }
            }
            BoundaryKind::Periodic { derivative } => {
                out.push(BcTerm {
                    mismatch: left.get(ch, MultiIndex::VALUE) - right.get(ch, MultiIndex::VALUE),
                    weight: 1.0,
                });
                if derivative {
                    out.push(BcTerm {
                        mismatch: left.get(ch, MultiIndex::X) - right.get(ch, MultiIndex::X),
                        weight: 1.0,
                    });
                }
            }
            BoundaryKind::None => {}
        }
    }
    out
}

/// `(L_IC, L_BC)` of a field without gradient tracking.
pub fn ic_bc_loss(spec: &SystemSpec, src: &impl FieldSource, pts: &CollocationSet) -> (f64, f64) {
    let zeros = vec![0.0; pts.ic_x.len()];
    let at_ic = src.fields(&pts.ic_x, &zeros, &[]);
    let l_ic: f64 = ic_terms(spec, &pts.ic_x, &at_ic, Samples).iter().map(|r| r.mean_square()).sum();
    if pts.bc_t.is_empty() || spec.boundary == BoundaryKind::None {
        return (l_ic, 0.0);
    }
    let n = pts.bc_t.len();
    let wanted = spec.boundary_derivatives();
    let left = src.fields(&vec![spec.domain.0; n], &pts.bc_t, &wanted);
    let right = src.fields(&vec![spec.domain.1; n], &pts.bc_t, &wanted);
    let l_bc = bc_terms(spec, &left, &right).iter().map(|b| b.weight * b.mismatch.mean_square()).sum();
    (l_ic, l_bc)
}
