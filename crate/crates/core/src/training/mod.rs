//! Objective assembly and the Adam training loop.

mod adam;
mod koopman;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use koopman::{
    koopman_loss, koopman_loss_var, sample_koopman_pairs, sample_pair_points, Integrator, KoopmanPairBatch,
};

use crate::autodiff::{JetLayout, MultiIndex, Tape, Tensor, Var};
use crate::linalg::LinalgError;
use crate::model::{init_params, save_checkpoint, Checkpoint, CheckpointError, Model, ModelConfig, ModelVars};
use crate::systems::{
    bc_terms, fields_from_var, ic_terms, residual, sample_collocation_with, BoundaryKind, CollocationCounts,
    CollocationSet, SystemSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Pinn,
    PikeEuler,
    PikeRk4,
    PikeExpm,
    SpikeExpm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Pinn, Variant::PikeEuler, Variant::PikeRk4, Variant::PikeExpm, Variant::SpikeExpm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Pinn => "pinn",
            Variant::PikeEuler => "pike-euler",
            Variant::PikeRk4 => "pike-rk4",
            Variant::PikeExpm => "pike-expm",
            Variant::SpikeExpm => "spike-expm",
        }
    }

    /// `None` for the plain physics-informed baseline.
    pub fn integrator(&self) -> Option<Integrator> {
        match self {
            Variant::Pinn => None,
            Variant::PikeEuler => Some(Integrator::Euler),
            Variant::PikeRk4 => Some(Integrator::Rk4),
            Variant::PikeExpm | Variant::SpikeExpm => Some(Integrator::Expm),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown variant {0:?}")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Variant::ALL.into_iter().find(|v| v.as_str() == norm).ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub lambda_koopman: f64,
    pub lambda_sparse: f64,
    pub lambda_ic: f64,
    pub lambda_bc: f64,
    pub koopman_dt: f64,
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Interior points per step for the residual term.
    pub physics_batch: usize,
    pub pair_batch: usize,
    /// Use every interior point each step.
    pub full_batch: bool,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub collocation: CollocationCounts,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(spec: &SystemSpec, variant: Variant, seed: u64) -> Self {
        let koopman = variant.integrator().is_some();
        Self {
            variant,
            lambda_koopman: if koopman { 0.1 } else { 0.0 },
            lambda_sparse: if variant == Variant::SpikeExpm { 0.01 } else { 0.0 },
            lambda_ic: 1.0,
            lambda_bc: 1.0,
            koopman_dt: 0.01,
            steps: 5000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            physics_batch: 2048,
            pair_batch: 512,
            full_batch: false,
            seed,
            checkpoint_every: 1000,
            collocation: CollocationCounts::default_for(spec),
            model: ModelConfig::new(spec.input_dim(), spec.state_dim),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let koopman = self.variant.integrator().is_some();
        if !koopman && (self.lambda_koopman != 0.0 || self.lambda_sparse != 0.0) {
            return Err("pinn takes no Koopman or sparsity weight".into());
        }
        if self.variant == Variant::SpikeExpm && self.lambda_sparse <= 0.0 {
            return Err("spike-expm needs a positive sparsity weight".into());
        }
        if koopman && (self.koopman_dt <= 0.0 || self.pair_batch == 0) {
            return Err("Koopman terms need a positive pair interval and batch".into());
        }
        if self.physics_batch == 0 || self.lr <= 0.0 {
            return Err("batch size and learning rate must be positive".into());
        }
        Ok(())
    }
}

/// Weighted loss contributions; they sum to `total`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub physics: f64,
    pub koopman: f64,
    pub sparse: f64,
    pub ic: f64,
    pub bc: f64,
}

impl LossBreakdown {
    const TERMS: [&'static str; 5] = ["physics", "koopman", "sparse", "ic", "bc"];

    fn terms(&self) -> [f64; 5] {
        [self.physics, self.koopman, self.sparse, self.ic, self.bc]
    }

    /// The first non-finite term, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        Self::TERMS.iter().zip(self.terms()).find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

pub const HISTORY_HEADER: &str = "step,total,physics,koopman,sparse,ic,bc";

pub fn history_csv(history: &[LossBreakdown]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!(
            "{i},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            l.total, l.physics, l.koopman, l.sparse, l.ic, l.bc
        ));
    }
    out
}

/// Points used for one evaluation of the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct StepBatch {
    pub interior_x: Vec<f64>,
    pub interior_t: Vec<f64>,
    pub pair_x: Vec<f64>,
    pub pair_t: Vec<f64>,
    pub ic_x: Vec<f64>,
    pub bc_t: Vec<f64>,
}

impl StepBatch {
    /// Every collocation point, with the interior points doubling as pair sources.
    pub fn full(pts: &CollocationSet) -> Self {
        Self {
            interior_x: pts.interior_x.clone(),
            interior_t: pts.interior_t.clone(),
            pair_x: pts.interior_x.clone(),
            pair_t: pts.interior_t.clone(),
            ic_x: pts.ic_x.clone(),
            bc_t: pts.bc_t.clone(),
        }
    }

    /// Fresh random interior and pair subsets; initial and boundary points in full.
    pub fn sample(pts: &CollocationSet, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = pts.interior_t.len();
        let (interior_x, interior_t) = if config.full_batch {
            (pts.interior_x.clone(), pts.interior_t.clone())
        } else {
            let idx = index::sample(rng, n, config.physics_batch.min(n));
            idx.iter().map(|i| (pts.interior_x[i], pts.interior_t[i])).unzip()
        };
        let (pair_x, pair_t) = if config.variant.integrator().is_some() {
            sample_pair_points(pts, config.pair_batch, rng)
        } else {
            (Vec::new(), Vec::new())
        };
        Self { interior_x, interior_t, pair_x, pair_t, ic_x: pts.ic_x.clone(), bc_t: pts.bc_t.clone() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{term} loss became non-finite at step {step}")]
    NonFinite { term: &'static str, step: usize, partial: Box<TrainOutcome> },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

fn plain_column<'t>(tape: &'t Tape, v: Vec<f64>) -> Var<'t> {
    tape.constant(Tensor::plain(v.len(), 1, v))
}

fn network_inputs<'t>(tape: &'t Tape, spec: &SystemSpec, xs: &[f64], ts: &[f64], wanted: &[MultiIndex]) -> Var<'t> {
    let layout = JetLayout::covering(wanted).expect("benchmark orders are at most 4");
    tape.constant(Tensor::seed_inputs(xs, ts, layout, spec.is_ode()))
}

fn sum_mean_squares<'t>(tape: &'t Tape, terms: impl IntoIterator<Item = (Var<'t>, f64)>) -> Var<'t> {
    terms
        .into_iter()
        .map(|(v, w)| v.square().mean().scale(w))
        .reduce(|a, b| a + b)
        .unwrap_or_else(|| tape.constant(Tensor::scalar(0.0)))
}

/// Builds every weighted term of the objective on `tape`.
fn build_terms<'t>(
    tape: &'t Tape,
    vars: &ModelVars<'t>,
    spec: &SystemSpec,
    batch: &StepBatch,
    config: &TrainConfig,
) -> Result<[Var<'t>; 5], LinalgError> {
    let zero = || tape.constant(Tensor::scalar(0.0));
    let derivs = spec.derivatives();
    let out = vars.solution.forward(network_inputs(tape, spec, &batch.interior_x, &batch.interior_t, &derivs));
    let res = residual(spec, &fields_from_var(out, &derivs));
    let physics = sum_mean_squares(tape, res.into_iter().map(|r| (r, 1.0)));

    let koopman = match config.variant.integrator() {
        Some(integrator) if config.lambda_koopman != 0.0 && !batch.pair_t.is_empty() => {
            let observe = |shift: f64| {
                let ts: Vec<f64> = batch.pair_t.iter().map(|t| t + shift).collect();
                let u = vars.solution.forward(network_inputs(tape, spec, &batch.pair_x, &ts, &[]));
                vars.embed(u)
            };
            let (z0, z1) = (observe(0.0), observe(config.koopman_dt));
            koopman_loss_var(z0, z1, vars.a, config.koopman_dt, integrator)?.scale(config.lambda_koopman)
        }
        _ => zero(),
    };

    let sparse = if config.lambda_sparse != 0.0 { vars.a.abs_sum().scale(config.lambda_sparse) } else { zero() };

    let n_ic = batch.ic_x.len();
    let ic = if n_ic > 0 && config.lambda_ic != 0.0 {
        let u = vars.solution.forward(network_inputs(tape, spec, &batch.ic_x, &vec![0.0; n_ic], &[]));
        let terms = ic_terms(spec, &batch.ic_x, &fields_from_var(u, &[]), |v| plain_column(tape, v));
        sum_mean_squares(tape, terms.into_iter().map(|t| (t, 1.0))).scale(config.lambda_ic)
    } else {
        zero()
    };

    let n_bc = batch.bc_t.len();
    let bc = if n_bc > 0 && config.lambda_bc != 0.0 && spec.boundary != BoundaryKind::None {
        let wanted = spec.boundary_derivatives();
        let side = |x: f64| {
            let u = vars.solution.forward(network_inputs(tape, spec, &vec![x; n_bc], &batch.bc_t, &wanted));
            fields_from_var(u, &wanted)
        };
        let terms = bc_terms(spec, &side(spec.domain.0), &side(spec.domain.1));
        sum_mean_squares(tape, terms.into_iter().map(|b| (b.mismatch, b.weight))).scale(config.lambda_bc)
    } else {
        zero()
    };
    Ok([physics, koopman, sparse, ic, bc])
}

fn breakdown(terms: &[Var<'_>; 5]) -> LossBreakdown {
    let [physics, koopman, sparse, ic, bc] = terms.map(|v| v.item());
    LossBreakdown { total: physics + koopman + sparse + ic + bc, physics, koopman, sparse, ic, bc }
}

/// `L = physics + λ_k L_koopman + λ_s ‖A‖₁ + λ_ic L_IC + λ_bc L_BC` on `batch`.
pub fn total_loss(
    model: &Model,
    spec: &SystemSpec,
    batch: &StepBatch,
    config: &TrainConfig,
) -> Result<LossBreakdown, LinalgError> {
    let tape = Tape::new();
    let vars = model.register(&tape);
    Ok(breakdown(&build_terms(&tape, &vars, spec, batch, config)?))
}

/// Loss breakdown and gradients in [`Model::param_tensors`] order.
pub fn loss_and_grad(
    model: &Model,
    spec: &SystemSpec,
    batch: &StepBatch,
    config: &TrainConfig,
) -> Result<(LossBreakdown, Vec<Tensor>), LinalgError> {
    let tape = Tape::new();
    let params = model.param_tensors();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let vars = model.vars(&leaves);
    let terms = build_terms(&tape, &vars, spec, batch, config)?;
    let parts = breakdown(&terms);
    let [physics, koopman, sparse, ic, bc] = terms;
    let grads = tape.backward(physics + koopman + sparse + ic + bc);
    let out = leaves.iter().zip(params).map(|(v, p)| Tensor { data: grads.get_or_zeros(*v), ..p }).collect();
    Ok((parts, out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    /// One entry per completed step, measured before that step's update.
    pub history: Vec<LossBreakdown>,
    pub collocation: CollocationSet,
}

/// Where and how often to write checkpoints.
#[derive(Clone, Debug, Default)]
pub struct CheckpointPlan {
    pub path: Option<PathBuf>,
    pub meta: Vec<(String, String)>,
}

fn write_checkpoint(plan: &CheckpointPlan, model: &Model, step: usize) -> Result<(), CheckpointError> {
    if let Some(path) = &plan.path {
        let mut meta: std::collections::BTreeMap<String, String> = plan.meta.iter().cloned().collect();
        meta.insert("step".into(), step.to_string());
        save_checkpoint(path, &Checkpoint { meta, model: model.clone() })?;
    }
    Ok(())
}

/// Trains from the deterministic initialisation for `config.seed`.
pub fn train(spec: &SystemSpec, config: &TrainConfig, plan: &CheckpointPlan) -> Result<TrainOutcome, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    let collocation = sample_collocation_with(spec, config.collocation, config.seed);
    let model = init_params(&config.model, config.seed);
    train_from(spec, config, plan, model, collocation)
}

/// Runs `config.steps` Adam steps from `model`.
pub fn train_from(
    spec: &SystemSpec,
    config: &TrainConfig,
    plan: &CheckpointPlan,
    mut model: Model,
    collocation: CollocationSet,
) -> Result<TrainOutcome, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xba7_c4e5);
    let mut adam = Adam::new(&model.param_tensors(), config.lr, config.beta1, config.beta2, config.eps);
    let mut history = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = StepBatch::sample(&collocation, config, &mut rng);
        let (loss, grads) = loss_and_grad(&model, spec, &batch, config)?;
        if let Some(term) = loss.non_finite() {
            log::error!("{} {}: {term} loss is {} at step {step}", spec.id, config.variant, loss.total);
            let partial = TrainOutcome { model, history, collocation };
            return Err(TrainError::NonFinite { term, step, partial: Box::new(partial) });
        }
        history.push(loss);
        if step % 500 == 0 {
            log::info!(
                "{} {} step {step}: total {:.3e} physics {:.3e} koopman {:.3e}",
                spec.id,
                config.variant,
                loss.total,
                loss.physics,
                loss.koopman
            );
        }
        adam.step(&mut model.arrays_mut(), &grads);
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 && model.is_finite() {
            write_checkpoint(plan, &model, step + 1)?;
        }
    }
    write_checkpoint(plan, &model, config.steps)?;
    Ok(TrainOutcome { model, history, collocation })
}
