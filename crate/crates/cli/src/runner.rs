//! One experiment end to end: train (or load), evaluate, write artifacts.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use spikelab::evaluation::{evaluate_run, linspace, EvalError, RunInfo, RunReport};
use spikelab::model::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, Model};
use spikelab::reference::{covers, solve_reference, ReferenceCache, ReferenceError, ReferenceField};
use spikelab::systems::{sample_collocation_with, FieldSource, SystemId, SystemSpec, Window};
use spikelab::training::{history_csv, train, CheckpointPlan, LossBreakdown, TrainConfig, TrainError, Variant};

use crate::config::EvalSettings;
use crate::plots::{Chart, Series};

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LOSS_FILE: &str = "loss.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint";
pub const PLOTS_DIR: &str = "plots";

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub system: SystemId,
    pub variant: Variant,
    pub seed: u64,
    /// Distinguishes ablation cells that share a variant.
    pub tag: Option<String>,
    pub train: TrainConfig,
    pub eval: EvalSettings,
}

impl RunPlan {
    pub fn label(&self) -> String {
        match &self.tag {
            Some(t) => format!("{}-{t}", self.variant),
            None => self.variant.to_string(),
        }
    }

    pub fn dir(&self, out: &Path) -> PathBuf {
        out.join(self.system.as_str()).join(self.label()).join(self.seed.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Training stopped on a non-finite loss; the last finite checkpoint is kept.
    NonFinite { term: String, step: usize },
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub plan: RunPlan,
    pub dir: PathBuf,
    pub status: RunStatus,
    pub report: Option<RunReport>,
    /// Files written by this run.
    pub files: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("training: {0}")]
    Train(#[from] TrainError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("reference: {0}")]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir.join(PLOTS_DIR))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn record(&mut self, name: &str) {
        let path = self.dir.join(name);
        if path.exists() && !self.files.contains(&path) {
            self.files.push(path);
        }
    }
}

fn meta_plan(plan: &RunPlan) -> Vec<(String, String)> {
    vec![
        ("system".into(), plan.system.to_string()),
        ("variant".into(), plan.variant.to_string()),
        ("seed".into(), plan.seed.to_string()),
        ("plan".into(), serde_json::to_string(plan).expect("plan serializes")),
    ]
}

/// Trains and evaluates `plan`, writing artifacts under `plan.dir(out)`.
pub fn execute(plan: &RunPlan, out: &Path, cache: Option<&ReferenceCache>) -> Result<RunOutcome, RunError> {
    let spec = SystemSpec::new(plan.system);
    let mut w = Writer::new(plan.dir(out))?;
    let ck_path = w.dir.join(CHECKPOINT_FILE);
    let ck_plan = CheckpointPlan { path: Some(ck_path.clone()), meta: meta_plan(plan) };
    log::info!("{} {} seed {}: training {} steps", plan.system, plan.label(), plan.seed, plan.train.steps);
    let trained = match train(&spec, &plan.train, &ck_plan) {
        Ok(t) => t,
        Err(TrainError::NonFinite { term, step, partial }) => {
            w.write(LOSS_FILE, &history_csv(&partial.history))?;
            w.write(&format!("{PLOTS_DIR}/loss.svg"), &loss_chart(&partial.history).to_svg())?;
            w.record(CHECKPOINT_FILE);
            let status = RunStatus::NonFinite { term: term.to_string(), step };
            return Ok(RunOutcome { plan: plan.clone(), dir: w.dir, status, report: None, files: w.files });
        }
        Err(e) => return Err(e.into()),
    };
    let final_loss = trained.history.last().copied();
    let mut meta: std::collections::BTreeMap<String, String> = ck_plan.meta.iter().cloned().collect();
    meta.insert("step".into(), plan.train.steps.to_string());
    if let Some(l) = &final_loss {
        meta.insert("final_loss".into(), serde_json::to_string(l).expect("loss serializes"));
    }
    save_checkpoint(&ck_path, &Checkpoint { meta, model: trained.model.clone() })?;
    w.record(CHECKPOINT_FILE);
    w.write(LOSS_FILE, &history_csv(&trained.history))?;
    w.write(&format!("{PLOTS_DIR}/loss.svg"), &loss_chart(&trained.history).to_svg())?;

    let info = RunInfo {
        variant: plan.variant,
        seed: plan.seed,
        steps: plan.train.steps,
        final_loss,
        collocation: Some(&trained.collocation),
    };
    let report = evaluate_run(&trained.model, &spec, &info, &plan.eval.options(cache.cloned()))?;
    finish(plan, &spec, &trained.model, report, w, cache)
}

/// Re-evaluates a saved checkpoint; the report matches the one written when
/// the checkpoint's run finished.
pub fn evaluate_checkpoint(path: &Path, out: &Path, cache: Option<&ReferenceCache>) -> Result<RunOutcome, RunError> {
    let ck = load_checkpoint(path)?;
    let plan: RunPlan = ck
        .meta
        .get("plan")
        .ok_or_else(|| RunError::Metadata("no run plan recorded".into()))
        .and_then(|s| serde_json::from_str(s).map_err(|e| RunError::Metadata(e.to_string())))?;
    let final_loss: Option<LossBreakdown> = match ck.meta.get("final_loss") {
        Some(s) => Some(serde_json::from_str(s).map_err(|e| RunError::Metadata(e.to_string()))?),
        None => None,
    };
    let spec = SystemSpec::new(plan.system);
    let collocation = sample_collocation_with(&spec, plan.train.collocation, plan.train.seed);
    let info = RunInfo {
        variant: plan.variant,
        seed: plan.seed,
        steps: plan.train.steps,
        final_loss,
        collocation: Some(&collocation),
    };
    let report = evaluate_run(&ck.model, &spec, &info, &plan.eval.options(cache.cloned()))?;
    let mut w = Writer::new(plan.dir(out))?;
    if w.dir.join(CHECKPOINT_FILE) != path {
        std::fs::copy(path, w.dir.join(CHECKPOINT_FILE))?;
    }
    w.record(CHECKPOINT_FILE);
    w.record(LOSS_FILE);
    w.record(&format!("{PLOTS_DIR}/loss.svg"));
    finish(&plan, &spec, &ck.model, report, w, cache)
}

fn finish(
    plan: &RunPlan,
    spec: &SystemSpec,
    model: &Model,
    report: RunReport,
    mut w: Writer,
    cache: Option<&ReferenceCache>,
) -> Result<RunOutcome, RunError> {
    w.write(REPORT_FILE, &report.to_json())?;
    w.write(METRICS_FILE, &report.metrics_csv())?;
    for (name, chart) in field_charts(spec, model, cache)? {
        w.write(&format!("{PLOTS_DIR}/{name}.svg"), &chart.to_svg())?;
    }
    log::info!("{} {} seed {}: wrote {}", plan.system, plan.label(), plan.seed, w.dir.display());
    Ok(RunOutcome { plan: plan.clone(), dir: w.dir, status: RunStatus::Completed, report: Some(report), files: w.files })
}

/// Runs every plan on a pool of `jobs` workers; results keep the plan order.
pub fn execute_all(
    plans: &[RunPlan],
    out: &Path,
    jobs: usize,
    cache: Option<&ReferenceCache>,
) -> Vec<Result<RunOutcome, RunError>> {
    let queue = Mutex::new(plans.iter().enumerate().collect::<VecDeque<_>>());
    let results = Mutex::new((0..plans.len()).map(|_| None).collect::<Vec<_>>());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, plans.len().max(1)) {
            s.spawn(|| loop {
                let Some((i, plan)) = queue.lock().expect("queue").pop_front() else { break };
                let r = execute(plan, out, cache);
                if let Err(e) = &r {
                    log::error!("{} {} seed {}: {e}", plan.system, plan.label(), plan.seed);
                }
                results.lock().expect("results")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("results").into_iter().map(|r| r.expect("every plan ran")).collect()
}

fn loss_chart(history: &[LossBreakdown]) -> Chart {
    let series = |name: &str, f: fn(&LossBreakdown) -> f64| {
        Series::new(name, history.iter().enumerate().map(|(i, l)| (i as f64, f(l))).collect())
    };
    let mut chart = Chart::new("Training loss", "step", "loss").log_y().with(series("total", |l| l.total));
    chart = chart.with(series("physics", |l| l.physics));
    if history.iter().any(|l| l.koopman > 0.0) {
        chart = chart.with(series("koopman", |l| l.koopman));
    }
    if history.iter().any(|l| l.sparse > 0.0) {
        chart = chart.with(series("sparsity", |l| l.sparse));
    }
    chart
}

fn reference(
    spec: &SystemSpec,
    xs: &[f64],
    ts: &[f64],
    cache: Option<&ReferenceCache>,
) -> Result<ReferenceField, ReferenceError> {
    match cache {
        Some(c) => c.get_or_solve(spec, xs, ts),
        None => solve_reference(spec, xs, ts),
    }
}

/// Network values on the tensor grid `ts × xs`, indexed `[channel][ti * nx + xi]`.
fn grid_values(model: &Model, xs: &[f64], ts: &[f64]) -> Vec<Vec<f64>> {
    let (px, pt): (Vec<f64>, Vec<f64>) = ts.iter().flat_map(|&t| xs.iter().map(move |&x| (x, t))).unzip();
    model.solution.values(&px, &pt)
}

const SLICE_NODES: usize = 101;
const ERROR_TIMES: usize = 51;

/// Solution slices and the error-versus-time curve.
fn field_charts(
    spec: &SystemSpec,
    model: &Model,
    cache: Option<&ReferenceCache>,
) -> Result<Vec<(&'static str, Chart)>, RunError> {
    let horizon = spec.windows().iter().map(|w| w.t.1).fold(0.0, f64::max);
    let mut charts = Vec::new();
    let whole = Window { name: "horizon".into(), x: spec.domain, t: (spec.train_window.t.0, horizon) };
    if spec.is_ode() {
        let ts = linspace(whole.t.0, whole.t.1, 10 * ERROR_TIMES);
        let net = grid_values(model, &[0.0], &ts);
        let mut slices = Chart::new(format!("{} trajectory", spec.id), "t", "state");
        let reference = covers(spec, &whole).then(|| reference(spec, &[0.0], &ts, cache)).transpose()?;
        for (ch, values) in net.iter().enumerate() {
            slices = slices.with(Series::new(format!("network {ch}"), ts.iter().copied().zip(values.iter().copied()).collect()));
            if let Some(r) = &reference {
                let pts = ts.iter().enumerate().map(|(ti, &t)| (t, r.at(ti, 0, ch))).collect();
                slices = slices.with(Series::new(format!("reference {ch}"), pts).dashed());
            }
        }
        charts.push(("solution", slices));
        if let Some(r) = &reference {
            let err = ts
                .iter()
                .enumerate()
                .map(|(ti, &t)| (t, (0..net.len()).map(|ch| (net[ch][ti] - r.at(ti, 0, ch)).powi(2)).sum::<f64>().sqrt()))
                .collect();
            charts.push(("ood_error", Chart::new("Prediction error", "t", "error").log_y().with(Series::new("|u - u*|", err))));
        }
        return Ok(charts);
    }

    let xs = linspace(spec.domain.0, spec.domain.1, SLICE_NODES);
    let (t0, t1) = spec.train_window.t;
    let times = [t0, 0.5 * (t0 + t1), t1];
    let net = grid_values(model, &xs, &times);
    let reference_slices = covers(spec, &spec.train_window).then(|| reference(spec, &xs, &times, cache)).transpose()?;
    let mut slices = Chart::new(format!("{} slices", spec.id), "x", "u");
    for (ti, t) in times.iter().enumerate() {
        let row = &net[0][ti * xs.len()..(ti + 1) * xs.len()];
        slices = slices.with(Series::new(format!("network t={t}"), xs.iter().copied().zip(row.iter().copied()).collect()));
        if let Some(r) = &reference_slices {
            let pts = xs.iter().enumerate().map(|(xi, &x)| (x, r.at(ti, xi, 0))).collect();
            slices = slices.with(Series::new(format!("reference t={t}"), pts).dashed());
        }
    }
    charts.push(("solution", slices));
    if covers(spec, &whole) {
        let ts = linspace(whole.t.0, whole.t.1, ERROR_TIMES);
        let r = reference(spec, &xs, &ts, cache)?;
        let net = grid_values(model, &xs, &ts);
        let nx = xs.len();
        let err = ts
            .iter()
            .enumerate()
            .map(|(ti, &t)| {
                let sq: f64 = (0..nx)
                    .flat_map(|xi| (0..net.len()).map(move |ch| (ti, xi, ch)))
                    .map(|(ti, xi, ch)| (net[ch][ti * nx + xi] - r.at(ti, xi, ch)).powi(2))
                    .sum();
                (t, (sq / nx as f64).sqrt())
            })
            .collect();
        let chart = Chart::new("Error versus time", "t", "RMS error over x").log_y().with(Series::new("rms", err));
        charts.push(("ood_error", chart));
    }
    Ok(charts)
}
