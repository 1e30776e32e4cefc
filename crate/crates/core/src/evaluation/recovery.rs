//! Post-hoc least-squares fit of equation coefficients from a field's partials.
//! Each system gets a small library fixed by the known form of its equation,
//! independent of the Koopman observables.

use serde::{Deserialize, Serialize};

use super::MetricGrid;
use crate::autodiff::{MultiIndex as M, Samples};
use crate::linalg::{least_squares, DenseMatrix, LinalgError};
use crate::systems::{DerivFields, FieldSource, SystemId, SystemSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredTerm {
    /// Left-hand side of the equation the term belongs to.
    pub equation: String,
    pub term: String,
    pub true_value: f64,
    pub recovered: f64,
    pub rel_error: f64,
    /// Coefficient of determination of the term's equation.
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecovery {
    pub terms: Vec<RecoveredTerm>,
    /// Smallest `R²` over the equations.
    pub r_squared: f64,
}

impl CoefficientRecovery {
    pub fn term(&self, name: &str) -> Option<&RecoveredTerm> {
        self.terms.iter().find(|t| t.term == name)
    }
}

/// One regression `target ≈ Σ c_k column_k`.
pub struct Regression {
    pub equation: String,
    pub target: Vec<f64>,
    /// `(name, true coefficient, column)`
    pub columns: Vec<(String, f64, Vec<f64>)>,
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn stack(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.into_iter().chain(b).collect()
}

fn neg(a: &[f64]) -> Vec<f64> {
    a.iter().map(|v| -v).collect()
}

/// The regressions of `spec` on sampled partials.
pub fn regression_problems(spec: &SystemSpec, d: &DerivFields<Samples>) -> Vec<Regression> {
    let g = |ch: usize, m: M| d.get(ch, m).0;
    let col = |name: &str, truth: f64, v: Vec<f64>| (name.to_string(), truth, v);
    let one = |equation: &str, target: Vec<f64>, columns| vec![Regression { equation: equation.into(), target, columns }];
    let (u, ut) = (g(0, M::VALUE), g(0, M::T));
    match spec.id {
        SystemId::Heat => one("u_t", ut, vec![col("u_xx", spec.coef("alpha"), g(0, M::XX))]),
        SystemId::Advection => one("u_t", ut, vec![col("u_x", -spec.coef("c"), g(0, M::X))]),
        SystemId::Burgers => one(
            "u_t",
            ut,
            vec![col("u*u_x", -1.0, mul(&u, &g(0, M::X))), col("u_xx", spec.coef("nu"), g(0, M::XX))],
        ),
        SystemId::AllenCahn => one(
            "u_t",
            ut,
            vec![
                col("u_xx", spec.coef("epsilon"), g(0, M::XX)),
                col("u", 1.0, u.clone()),
                col("u^3", -1.0, u.iter().map(|v| v.powi(3)).collect()),
            ],
        ),
        SystemId::Kdv => {
            one("u_t", ut, vec![col("u*u_x", -1.0, mul(&u, &g(0, M::X))), col("u_xxx", -1.0, g(0, M::XXX))])
        }
        SystemId::ReactionDiffusion => one(
            "u_t",
            ut,
            vec![
                col("u_xx", spec.coef("D"), g(0, M::XX)),
                col("u", 1.0, u.clone()),
                col("u^2", -1.0, mul(&u, &u)),
            ],
        ),
        SystemId::CahnHilliard => {
            let e = spec.coef("epsilon");
            let (ux, uxx) = (g(0, M::X), g(0, M::XX));
            let chem = (0..u.len()).map(|i| 6.0 * u[i] * ux[i] * ux[i] + (3.0 * u[i] * u[i] - 1.0) * uxx[i]).collect();
            one("u_t", ut, vec![col("u_xxxx", -e * e, g(0, M::XXXX)), col("(u^3-u)_xx", 1.0, chem)])
        }
        SystemId::KuramotoSivashinsky => one(
            "u_t",
            ut,
            vec![
                col("u*u_x", -1.0, mul(&u, &g(0, M::X))),
                col("u_xx", -1.0, g(0, M::XX)),
                col("u_xxxx", -1.0, g(0, M::XXXX)),
            ],
        ),
        SystemId::Schrodinger => {
            // u_t = i u_xx + i |u|² u, split into real and imaginary parts.
            let (p, q) = (g(0, M::VALUE), g(1, M::VALUE));
            let m2: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a * a + b * b).collect();
            one(
                "u_t",
                stack(g(0, M::T), g(1, M::T)),
                vec![
                    col("i*u_xx", 1.0, stack(neg(&g(1, M::XX)), g(0, M::XX))),
                    col("i*|u|^2*u", 1.0, stack(neg(&mul(&m2, &q)), mul(&m2, &p))),
                ],
            )
        }
        SystemId::Lorenz => {
            let (x, y, z) = (g(0, M::VALUE), g(1, M::VALUE), g(2, M::VALUE));
            let (s, r, b) = (spec.coef("sigma"), spec.coef("rho"), spec.coef("beta"));
            let y_minus_x = y.iter().zip(&x).map(|(a, c)| a - c).collect();
            vec![
                Regression { equation: "x_t".into(), target: g(0, M::T), columns: vec![col("y-x", s, y_minus_x)] },
                Regression {
                    equation: "y_t".into(),
                    target: g(1, M::T),
                    columns: vec![col("x", r, x.clone()), col("x*z", -1.0, mul(&x, &z)), col("y", -1.0, y.clone())],
                },
                Regression {
                    equation: "z_t".into(),
                    target: g(2, M::T),
                    columns: vec![col("x*y", 1.0, mul(&x, &y)), col("z", -b, z)],
                },
            ]
        }
        SystemId::Seir => {
            let (s, e, i) = (g(0, M::VALUE), g(1, M::VALUE), g(2, M::VALUE));
            let (beta, sigma, gamma, n) = (spec.coef("beta"), spec.coef("sigma"), spec.coef("gamma"), spec.coef("N"));
            let contact: Vec<f64> = mul(&s, &i).iter().map(|v| v / n).collect();
            vec![
                Regression { equation: "S_t".into(), target: g(0, M::T), columns: vec![col("S*I/N", -beta, contact)] },
                Regression {
                    equation: "I_t".into(),
                    target: g(2, M::T),
                    columns: vec![col("E", sigma, e), col("I", -gamma, i.clone())],
                },
                Regression { equation: "R_t".into(), target: g(3, M::T), columns: vec![col("I", gamma, i)] },
            ]
        }
    }
}

/// Fits every regression of `spec` on partials of `src` at the grid nodes.
pub fn recover_coefficients(
    src: &impl FieldSource,
    spec: &SystemSpec,
    grid: &MetricGrid,
) -> Result<CoefficientRecovery, LinalgError> {
    let (xs, ts) = grid.points();
    let fields = src.fields(&xs, &ts, &spec.derivatives());
    let mut terms = Vec::new();
    let mut worst = f64::INFINITY;
    for reg in regression_problems(spec, &fields) {
        let n = reg.target.len();
        let k = reg.columns.len();
        let mut theta = DenseMatrix::zeros(n, k);
        for (j, (_, _, c)) in reg.columns.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                theta[(i, j)] = *v;
            }
        }
        let fit = least_squares(&theta, &reg.target)?;
        worst = worst.min(fit.r_squared);
        for ((name, truth, _), c) in reg.columns.iter().zip(&fit.coefficients) {
            terms.push(RecoveredTerm {
                equation: reg.equation.clone(),
                term: name.clone(),
                true_value: *truth,
                recovered: *c,
                rel_error: (c - truth).abs() / truth.abs(),
                r_squared: fit.r_squared,
            });
        }
    }
    Ok(CoefficientRecovery { terms, r_squared: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::exact::surrogate_field;

    #[test]
    fn closed_forms_recover_their_coefficients() {
        for spec in SystemSpec::registry() {
            let Some(src) = surrogate_field(&spec) else { continue };
            let grid = MetricGrid::with_resolution(&spec, &spec.train_window, 30, 30);
            let rec = recover_coefficients(&src, &spec, &grid).unwrap();
            assert!(rec.r_squared >= 1.0 - 1e-10, "{}: R² {}", spec.id, rec.r_squared);
            for t in &rec.terms {
                assert!(t.rel_error <= 1e-6, "{}: {} recovered {} vs {}", spec.id, t.term, t.recovered, t.true_value);
            }
        }
    }
}
