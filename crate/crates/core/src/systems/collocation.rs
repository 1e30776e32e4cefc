use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SystemSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub interior: usize,
    /// Boundary points over both ends; half as many boundary times.
    pub boundary: usize,
    pub initial: usize,
}

impl CollocationCounts {
    pub fn default_for(spec: &SystemSpec) -> Self {
        if spec.is_ode() {
            Self { interior: 5000, boundary: 0, initial: 1 }
        } else {
            Self { interior: 10_000, boundary: 200, initial: 100 }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    /// Interior points; `x` is zero for time-only systems.
    pub interior_x: Vec<f64>,
    pub interior_t: Vec<f64>,
    /// Positions of the `t = 0` points.
    pub ic_x: Vec<f64>,
    /// Times at which both domain ends are constrained.
    pub bc_t: Vec<f64>,
    pub seed: u64,
}

impl CollocationSet {
    pub fn boundary_count(&self) -> usize {
        2 * self.bc_t.len()
    }
}

/// `n` points in the unit cube of dimension `dims`; every axis has exactly one
/// point in each of the `n` equal bins.
pub fn latin_hypercube<R: Rng>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dims]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..dims {
        perm.shuffle(rng);
        for (p, &bin) in pts.iter_mut().zip(&perm) {
            p[d] = (bin as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

pub fn sample_collocation(spec: &SystemSpec, seed: u64) -> CollocationSet {
    sample_collocation_with(spec, CollocationCounts::default_for(spec), seed)
}

pub fn sample_collocation_with(spec: &SystemSpec, counts: CollocationCounts, seed: u64) -> CollocationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = spec.domain;
    let (t0, t1) = spec.train_window.t;
    if spec.is_ode() {
        let ts = latin_hypercube(counts.interior, 1, &mut rng);
        return CollocationSet {
            interior_x: vec![0.0; counts.interior],
            interior_t: ts.iter().map(|p| t0 + (t1 - t0) * p[0]).collect(),
            ic_x: vec![0.0; counts.initial.min(1)],
            bc_t: Vec::new(),
            seed,
        };
    }
    let inner = latin_hypercube(counts.interior, 2, &mut rng);
    let ic = latin_hypercube(counts.initial, 1, &mut rng);
    let bc = latin_hypercube(counts.boundary / 2, 1, &mut rng);
    CollocationSet {
        interior_x: inner.iter().map(|p| a + (b - a) * p[0]).collect(),
        interior_t: inner.iter().map(|p| t0 + (t1 - t0) * p[1]).collect(),
        ic_x: ic.iter().map(|p| a + (b - a) * p[0]).collect(),
        bc_t: bc.iter().map(|p| t0 + (t1 - t0) * p[0]).collect(),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::SystemId;

    #[test]
    fn four_points_fill_every_bin() {
        let pts = latin_hypercube(4, 2, &mut ChaCha8Rng::seed_from_u64(3));
        for d in 0..2 {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[d] * 4.0) as usize).collect();
            bins.sort();
            assert_eq!(bins, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn default_counts_and_determinism() {
        let heat = SystemSpec::new(SystemId::Heat);
        let c = sample_collocation(&heat, 7);
        assert_eq!((c.interior_t.len(), c.boundary_count(), c.ic_x.len()), (10_000, 200, 100));
        assert!(c.interior_x.iter().chain(&c.interior_t).all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(c, sample_collocation(&heat, 7));
        assert_ne!(c, sample_collocation(&heat, 8));

        let lorenz = sample_collocation(&SystemSpec::new(SystemId::Lorenz), 0);
        assert_eq!((lorenz.interior_t.len(), lorenz.boundary_count(), lorenz.ic_x.len()), (5000, 0, 1));
    }

    #[test]
    fn ks_points_cover_its_longer_interval() {
        let ks = SystemSpec::new(SystemId::KuramotoSivashinsky);
        let c = sample_collocation(&ks, 1);
        let max = c.interior_x.iter().cloned().fold(0.0, f64::max);
        assert!(max > 6.0 && max <= ks.domain.1);
    }
}
