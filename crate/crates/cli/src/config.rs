//! Run configuration: a TOML file whose sections mirror the training and
//! evaluation settings, overlaid by command-line flags.
//!
//! ```toml
//! [run]
//! systems = ["heat", "burgers"]
//! variants = ["pinn", "pike-expm"]
//! seeds = [0, 1]
//! jobs = 2
//!
//! [train]
//! steps = 5000
//! lr = 1e-3
//! physics_batch = 512
//!
//! [model]
//! hidden = [64, 64, 64]
//!
//! [collocation]
//! interior = 4000
//!
//! [eval]
//! grid_x = 100
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikelab::evaluation::EvalOptions;
use spikelab::reference::ReferenceCache;
use spikelab::systems::SystemSpec;
use spikelab::training::{TrainConfig, Variant};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub systems: Option<Vec<String>>,
    pub variants: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub lambda_koopman: Option<f64>,
    pub lambda_sparse: Option<f64>,
    pub lambda_ic: Option<f64>,
    pub lambda_bc: Option<f64>,
    pub koopman_dt: Option<f64>,
    pub physics_batch: Option<usize>,
    pub pair_batch: Option<usize>,
    pub full_batch: Option<bool>,
    pub checkpoint_every: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Option<Vec<usize>>,
    pub latent_hidden: Option<Vec<usize>>,
    pub observable_dim: Option<usize>,
    pub degree: Option<usize>,
    pub learnable_w_lib: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationSection {
    pub interior: Option<usize>,
    pub boundary: Option<usize>,
    pub initial: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub grid_x: Option<usize>,
    pub grid_t: Option<usize>,
    pub ode_points: Option<usize>,
    pub bound_delta: Option<f64>,
    pub bound_nodes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub collocation: CollocationSection,
    #[serde(default)]
    pub eval: EvalSection,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl FileConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text, path)
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &FileConfig) -> Self {
        overlay!(self.run, top.run, systems, variants, seeds, out, jobs);
        overlay!(
            self.train,
            top.train,
            steps,
            lr,
            lambda_koopman,
            lambda_sparse,
            lambda_ic,
            lambda_bc,
            koopman_dt,
            physics_batch,
            pair_batch,
            full_batch,
            checkpoint_every
        );
        overlay!(self.model, top.model, hidden, latent_hidden, observable_dim, degree, learnable_w_lib);
        overlay!(self.collocation, top.collocation, interior, boundary, initial);
        overlay!(self.eval, top.eval, grid_x, grid_t, ode_points, bound_delta, bound_nodes);
        self
    }

    /// Defaults for `(spec, variant, seed)` with this file's settings applied.
    /// Koopman and sparsity weights only reach the variants that use them.
    pub fn train_config(&self, spec: &SystemSpec, variant: Variant, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::new(spec, variant, seed);
        let t = &self.train;
        let koopman = variant.integrator().is_some();
        if let (true, Some(v)) = (koopman, t.lambda_koopman) {
            c.lambda_koopman = v;
        }
        if let (Variant::SpikeExpm, Some(v)) = (variant, t.lambda_sparse) {
            c.lambda_sparse = v;
        }
        c.steps = t.steps.unwrap_or(c.steps);
        c.lr = t.lr.unwrap_or(c.lr);
        c.lambda_ic = t.lambda_ic.unwrap_or(c.lambda_ic);
        c.lambda_bc = t.lambda_bc.unwrap_or(c.lambda_bc);
        c.koopman_dt = t.koopman_dt.unwrap_or(c.koopman_dt);
        c.physics_batch = t.physics_batch.unwrap_or(c.physics_batch);
        c.pair_batch = t.pair_batch.unwrap_or(c.pair_batch);
        c.full_batch = t.full_batch.unwrap_or(c.full_batch);
        c.checkpoint_every = t.checkpoint_every.unwrap_or(c.checkpoint_every);
        let m = &self.model;
        if let Some(h) = &m.hidden {
            c.model.hidden = h.clone();
        }
        if let Some(h) = &m.latent_hidden {
            c.model.latent_hidden = h.clone();
        }
        c.model.observable_dim = m.observable_dim.unwrap_or(c.model.observable_dim);
        c.model.degree = m.degree.unwrap_or(c.model.degree);
        c.model.learnable_w_lib = m.learnable_w_lib.unwrap_or(c.model.learnable_w_lib);
        let p = &self.collocation;
        c.collocation.interior = p.interior.unwrap_or(c.collocation.interior);
        c.collocation.boundary = p.boundary.unwrap_or(c.collocation.boundary);
        c.collocation.initial = p.initial.unwrap_or(c.collocation.initial);
        c
    }

    pub fn eval_settings(&self) -> EvalSettings {
        let d = EvalOptions { cache: None, ..EvalOptions::default() };
        let e = &self.eval;
        EvalSettings {
            grid_x: e.grid_x.unwrap_or(d.grid.0),
            grid_t: e.grid_t.unwrap_or(d.grid.1),
            ode_points: e.ode_points.unwrap_or(d.ode_points),
            bound_delta: e.bound_delta.unwrap_or(d.bound_delta),
            bound_nodes: e.bound_nodes.unwrap_or(d.bound_nodes),
        }
    }
}

/// Fully resolved evaluation resolutions, as recorded in manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub grid_x: usize,
    pub grid_t: usize,
    pub ode_points: usize,
    pub bound_delta: f64,
    pub bound_nodes: usize,
}

impl EvalSettings {
    pub fn options(&self, cache: Option<ReferenceCache>) -> EvalOptions {
        EvalOptions {
            grid: (self.grid_x, self.grid_t),
            ode_points: self.ode_points,
            cache,
            bound_delta: self.bound_delta,
            bound_nodes: self.bound_nodes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spikelab::systems::SystemId;

    const FILE: &str = r#"
[run]
systems = ["heat"]
seeds = [3]

[train]
steps = 40
lambda_koopman = 0.5
lambda_sparse = 0.2

[model]
hidden = [16, 16]
"#;

    #[test]
    fn flags_override_file_values() {
        let file = FileConfig::parse(FILE, Path::new("t.toml")).unwrap();
        let mut flags = FileConfig::default();
        flags.train.steps = Some(7);
        let merged = file.overlay(&flags);
        assert_eq!(merged.train.steps, Some(7));
        assert_eq!(merged.run.seeds, Some(vec![3]));
        assert_eq!(merged.model.hidden, Some(vec![16, 16]));
    }

    #[test]
    fn weights_only_reach_variants_that_use_them() {
        let file = FileConfig::parse(FILE, Path::new("t.toml")).unwrap();
        let spec = SystemSpec::new(SystemId::Heat);
        let pinn = file.train_config(&spec, Variant::Pinn, 0);
        assert_eq!((pinn.lambda_koopman, pinn.lambda_sparse, pinn.steps), (0.0, 0.0, 40));
        let pike = file.train_config(&spec, Variant::PikeEuler, 0);
        assert_eq!((pike.lambda_koopman, pike.lambda_sparse), (0.5, 0.0));
        let spike = file.train_config(&spec, Variant::SpikeExpm, 0);
        assert_eq!((spike.lambda_koopman, spike.lambda_sparse), (0.5, 0.2));
        assert_eq!(spike.model.hidden, vec![16, 16]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = FileConfig::parse("[train]\nstep = 3\n", Path::new("t.toml")).unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
    }
}
