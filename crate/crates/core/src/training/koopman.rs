use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::linalg::{expm, DenseMatrix, LinalgError};
use crate::model::{embed, evaluate_solution, GeneratorMatrix, Model};
use crate::systems::CollocationSet;

/// How `ż = A z` is advanced over one pair interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    Rk4,
    Expm,
}

/// Observables at consecutive times `t` and `t + dt` at the same positions.
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanPairBatch {
    /// `n × M`, one observable per row.
    pub z0: DenseMatrix,
    pub z1: DenseMatrix,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub dt: f64,
}

impl KoopmanPairBatch {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Draws `n` distinct interior collocation points (all of them when fewer).
pub fn sample_pair_points<R: Rng>(pts: &CollocationSet, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let total = pts.interior_t.len();
    let idx = index::sample(rng, total, n.min(total));
    idx.iter().map(|i| (pts.interior_x[i], pts.interior_t[i])).unzip()
}

/// Pairs `(g(u_θ(x, t)), g(u_θ(x, t + dt)))` at a fresh random subset of the
/// interior collocation points. Pair times may run past the training window.
pub fn sample_koopman_pairs<R: Rng>(
    model: &Model,
    pts: &CollocationSet,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> KoopmanPairBatch {
    let (xs, ts) = sample_pair_points(pts, n, rng);
    let m = model.embedding.observable_dim;
    let observe = |t_shift: f64| {
        let rows: Vec<f64> = xs
            .iter()
            .zip(&ts)
            .flat_map(|(&x, &t)| embed(&evaluate_solution(&model.solution, x, t + t_shift), &model.embedding))
            .collect();
        DenseMatrix::from_vec(xs.len(), m, rows).expect("embedding width")
    };
    KoopmanPairBatch { z0: observe(0.0), z1: observe(dt), xs, ts, dt }
}

/// `z + s v`
fn plus(z: &DenseMatrix, s: f64, v: &DenseMatrix) -> DenseMatrix {
    let mut out = z.clone();
    out.axpy(s, v);
    out
}

/// Row-wise propagation `z ↦ z Kᵀ` by one step of the chosen integrator.
fn propagate(z: &DenseMatrix, a: &DenseMatrix, dt: f64, integrator: Integrator) -> Result<DenseMatrix, LinalgError> {
    let at = a.transpose();
    let apply = |v: &DenseMatrix| v.matmul(&at);
    Ok(match integrator {
        Integrator::Euler => plus(z, dt, &apply(z)),
        Integrator::Rk4 => {
            let k1 = apply(z);
            let k2 = apply(&plus(z, dt / 2.0, &k1));
            let k3 = apply(&plus(z, dt / 2.0, &k2));
            let k4 = apply(&plus(z, dt, &k3));
            let mut out = plus(z, dt / 6.0, &k1);
            out.axpy(dt / 3.0, &k2);
            out.axpy(dt / 3.0, &k3);
            out.axpy(dt / 6.0, &k4);
            out
        }
        Integrator::Expm => z.matmul(&expm(a, dt)?.transpose()),
    })
}

/// Mean squared propagation error over every pair and observable component.
pub fn koopman_loss(pairs: &KoopmanPairBatch, a: &GeneratorMatrix, integrator: Integrator) -> Result<f64, LinalgError> {
    assert!(!pairs.is_empty(), "no Koopman pairs");
    let pred = propagate(&pairs.z0, &a.a, pairs.dt, integrator)?;
    let sq: f64 = pred.as_slice().iter().zip(pairs.z1.as_slice()).map(|(p, q)| (p - q).powi(2)).sum();
    Ok(sq / pairs.z1.as_slice().len() as f64)
}

/// Taped [`koopman_loss`] on `n × M` observables.
pub fn koopman_loss_var<'t>(
    z0: Var<'t>,
    z1: Var<'t>,
    a: Var<'t>,
    dt: f64,
    integrator: Integrator,
) -> Result<Var<'t>, LinalgError> {
    let pred = match integrator {
        Integrator::Euler => z0 + z0.matmul_t(a).scale(dt),
        Integrator::Rk4 => {
            let k1 = z0.matmul_t(a);
            let k2 = (z0 + k1.scale(dt / 2.0)).matmul_t(a);
            let k3 = (z0 + k2.scale(dt / 2.0)).matmul_t(a);
            let k4 = (z0 + k3.scale(dt)).matmul_t(a);
            z0 + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0)
        }
        Integrator::Expm => z0.matmul_t(a.expm(dt)?),
    };
    let m = z1.value().cols as f64;
    Ok((z1 - pred).mean_row_sq_norm().scale(1.0 / m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    fn scalar_pairs(z0: f64, z1: f64, dt: f64) -> KoopmanPairBatch {
        let m = |v| DenseMatrix::from_vec(1, 1, vec![v]).unwrap();
        KoopmanPairBatch { z0: m(z0), z1: m(z1), xs: vec![0.0], ts: vec![0.0], dt }
    }

    fn generator(a: f64) -> GeneratorMatrix {
        GeneratorMatrix { a: DenseMatrix::from_vec(1, 1, vec![a]).unwrap(), library_size: 1 }
    }

    #[test]
    fn identity_pairs_with_zero_generator() {
        let p = scalar_pairs(0.7, 0.7, 0.01);
        for i in [Integrator::Euler, Integrator::Rk4, Integrator::Expm] {
            assert_eq!(koopman_loss(&p, &generator(0.0), i).unwrap(), 0.0);
        }
    }

    #[test]
    fn scalar_closed_forms() {
        let (a, dt): (f64, f64) = (-1.3, 0.01);
        let p = scalar_pairs(1.0, (a * dt).exp(), dt);
        assert!(koopman_loss(&p, &generator(a), Integrator::Expm).unwrap() < 1e-28);
        let euler = ((a * dt).exp() - 1.0 - a * dt).powi(2);
        assert!((koopman_loss(&p, &generator(a), Integrator::Euler).unwrap() - euler).abs() <= 1e-12 * euler.max(1e-300));
        let h = a * dt;
        let p4 = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let rk4 = ((a * dt).exp() - p4).powi(2);
        let got = koopman_loss(&p, &generator(a), Integrator::Rk4).unwrap();
        assert!((got - rk4).abs() <= 1e-12, "{got:e} vs {rk4:e}");
    }

    #[test]
    fn taped_loss_matches_plain() {
        let z0 = DenseMatrix::from_vec(2, 2, vec![0.3, -0.1, 0.8, 0.5]).unwrap();
        let z1 = DenseMatrix::from_vec(2, 2, vec![0.31, -0.12, 0.79, 0.52]).unwrap();
        let a = DenseMatrix::from_vec(2, 2, vec![0.2, -1.0, 0.7, -0.4]).unwrap();
        let pairs = KoopmanPairBatch { z0: z0.clone(), z1: z1.clone(), xs: vec![0.0; 2], ts: vec![0.0; 2], dt: 0.05 };
        let g = GeneratorMatrix { a: a.clone(), library_size: 2 };
        for i in [Integrator::Euler, Integrator::Rk4, Integrator::Expm] {
            let tape = Tape::new();
            let l = koopman_loss_var(
                tape.constant(Tensor::from_matrix(&z0)),
                tape.constant(Tensor::from_matrix(&z1)),
                tape.leaf(Tensor::from_matrix(&a)),
                0.05,
                i,
            )
            .unwrap();
            assert!((l.item() - koopman_loss(&pairs, &g, i).unwrap()).abs() < 1e-15);
        }
    }
}
