//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary under `cargo test`. Pass criterion numbers to run a
//! subset (`cargo test --test acceptance -- 1 3`). Failures are reported but
//! only fail the process when `SPIKELAB_ACCEPTANCE_STRICT` is set.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikelab::autodiff::{eval_with_input_derivs, MultiIndex};
use spikelab::evaluation::{
    bound_nodes, growth_factor, linspace, ood_bound, ood_bound_diagnostic, recover_coefficients, MetricGrid, RunReport,
    RHO_LIMIT,
};
use spikelab::linalg::{expm, DenseMatrix};
use spikelab::model::{init_params, library_size, load_checkpoint, GeneratorMatrix, MlpArch, MlpParams, Model};
use spikelab::reference::{solve_ode_adaptive, solve_reference, solve_split_step, SpectralSettings, ODE_TOL};
use spikelab::systems::exact::surrogate_field;
use spikelab::systems::{sample_collocation_with, CollocationCounts, SystemId, SystemSpec};
use spikelab::training::{
    koopman_loss, loss_and_grad, total_loss, Integrator, KoopmanPairBatch, StepBatch, TrainConfig, Variant,
};
use spikelab_cli::checks::{self, Check};
use spikelab_cli::manifest::MANIFEST_FILE;

const DESK_STEPS: usize = 5000;
const DESK_PHYSICS_BATCH: usize = 512;
const DESK_PAIR_BATCH: usize = 128;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(checks: &[Check]) -> Verdict {
    Verdict {
        passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
        detail: checks
            .iter()
            .map(|c| format!("{}{}: {}", if c.passed { "" } else { "[failed] " }, c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// Desk runs go through the command-line binary and are shared between criteria.
struct Desk {
    root: PathBuf,
    reports: RefCell<BTreeMap<(SystemId, Variant), RunReport>>,
}

impl Desk {
    fn run_dir(&self, system: SystemId, variant: Variant) -> PathBuf {
        self.root.join("desk").join(system.as_str()).join(variant.as_str()).join("0")
    }

    fn report(&self, system: SystemId, variant: Variant) -> Result<RunReport, String> {
        if let Some(r) = self.reports.borrow().get(&(system, variant)) {
            return Ok(r.clone());
        }
        let dir = self.run_dir(system, variant);
        let start = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_spikelab"))
            .args(["run", "--system", system.as_str(), "--variant", variant.as_str(), "--seed", "0"])
            .args(["--steps", &DESK_STEPS.to_string()])
            .args(["--physics-batch", &DESK_PHYSICS_BATCH.to_string()])
            .args(["--pair-batch", &DESK_PAIR_BATCH.to_string()])
            .arg("--out")
            .arg(self.root.join("desk"))
            .env("RUST_LOG", "warn")
            .env("SPIKELAB_CACHE", self.root.join("cache"))
            .output()
            .map_err(|e| e.to_string())?;
        eprintln!("  desk run {system} {variant}: {:.0}s", start.elapsed().as_secs_f64());
        if !out.status.success() {
            return Err(format!("{system} {variant} exited with {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
        let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
        let r = RunReport::from_json(&text).map_err(|e| e.to_string())?;
        self.reports.borrow_mut().insert((system, variant), r.clone());
        Ok(r)
    }
}

fn rel_fro(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    d.norm_fro() / b.norm_fro()
}

fn taylor(a: &DenseMatrix) -> DenseMatrix {
    let mut term = DenseMatrix::identity(a.rows());
    let mut sum = term.clone();
    for k in 1..=60 {
        term = term.matmul(a).scaled(1.0 / k as f64);
        sum.axpy(1.0, &term);
    }
    sum
}

fn c1_expm(_: &Desk) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=16);
        let mut a = DenseMatrix::zeros(n, n);
        for v in a.as_mut_slice() {
            *v = rng.random_range(-1.0..1.0);
        }
        let a = a.scaled(rng.random_range(0.05..5.0) / a.norm1());
        worst = worst.max(rel_fro(&expm(&a, 1.0).unwrap(), &taylor(&a)));
    }
    verdict(&[check("expm on 50 matrices", worst <= 1e-10, format!("worst relative error {worst:.2e}"))])
}

fn stencil(k: u8) -> [f64; 5] {
    match k {
        0 => [0.0, 0.0, 1.0, 0.0, 0.0],
        1 => [0.0, -0.5, 0.0, 0.5, 0.0],
        2 => [0.0, 1.0, -2.0, 1.0, 0.0],
        3 => [-0.5, 1.0, 0.0, -1.0, 0.5],
        _ => [1.0, -4.0, 6.0, -4.0, 1.0],
    }
}

fn central(net: &MlpParams, x: f64, t: f64, m: MultiIndex, h: f64) -> f64 {
    let (sx, st) = (stencil(m.x), stencil(m.t));
    let mut acc = 0.0;
    for (i, wx) in sx.iter().enumerate() {
        for (j, wt) in st.iter().enumerate() {
            if wx * wt != 0.0 {
                acc += wx * wt * net.forward_point(&[x + (i as f64 - 2.0) * h, t + (j as f64 - 2.0) * h])[0];
            }
        }
    }
    acc / h.powi(m.order() as i32)
}

fn richardson(net: &MlpParams, x: f64, t: f64, m: MultiIndex) -> f64 {
    let d: Vec<f64> = (0..3).map(|k| central(net, x, t, m, 0.08 / 2f64.powi(k))).collect();
    let r = [(4.0 * d[1] - d[0]) / 3.0, (4.0 * d[2] - d[1]) / 3.0];
    (16.0 * r[1] - r[0]) / 15.0
}

fn small_config(spec: &SystemSpec, variant: Variant) -> TrainConfig {
    let mut c = TrainConfig::new(spec, variant, 0);
    c.model.hidden = vec![8, 8];
    c.model.latent_hidden = vec![6];
    c.model.observable_dim = library_size(spec.state_dim, 2) + 3;
    c.collocation = CollocationCounts { interior: 24, boundary: 6, initial: 6 };
    c.physics_batch = 24;
    c.pair_batch = 12;
    c
}

fn c2_autodiff(_: &Desk) -> Verdict {
    let mut input_worst: f64 = 0.0;
    let indices: Vec<MultiIndex> =
        (0..=4u8).flat_map(|d| (0..=d).map(move |t| MultiIndex::new(d - t, t))).collect();
    for seed in 0..3 {
        let arch = MlpArch { input_dim: 2, hidden: vec![12, 12, 12], output_dim: 1, activate_output: false };
        let net = MlpParams::init(arch, &mut ChaCha8Rng::seed_from_u64(seed));
        let (x, t) = (0.37, 0.61);
        let jets = eval_with_input_derivs(&net, &[x, t], &indices).unwrap();
        for &m in &indices {
            let exact = jets[&m][0];
            input_worst = input_worst.max((richardson(&net, x, t, m) - exact).abs() / exact.abs().max(1e-2));
        }
    }

    let mut param_worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = [
        (SystemId::Burgers, Variant::Pinn),
        (SystemId::Burgers, Variant::PikeEuler),
        (SystemId::Heat, Variant::PikeRk4),
        (SystemId::Kdv, Variant::PikeExpm),
        (SystemId::Lorenz, Variant::SpikeExpm),
    ];
    for (id, variant) in cases {
        let spec = SystemSpec::new(id);
        let config = small_config(&spec, variant);
        let batch = StepBatch::full(&sample_collocation_with(&spec, config.collocation, 3));
        let mut model = init_params(&config.model, 5);
        for v in model.generator.a.as_mut_slice() {
            *v = rng.random_range(-0.5..0.5);
        }
        let (_, grads) = loss_and_grad(&model, &spec, &batch, &config).unwrap();
        let loss = |m: &Model| total_loss(m, &spec, &batch, &config).unwrap().total;
        let h = 1e-3;
        for _ in 0..20 {
            let k = rng.random_range(0..grads.len());
            let i = rng.random_range(0..grads[k].data.len());
            let shifted = |s: f64| {
                let mut m = model.clone();
                m.arrays_mut()[k][i] += s;
                loss(&m)
            };
            let fd = (8.0 * (shifted(h) - shifted(-h)) - (shifted(2.0 * h) - shifted(-2.0 * h))) / (12.0 * h);
            let ad = grads[k].data[i];
            param_worst = param_worst.max((fd - ad).abs() / ad.abs().max(fd.abs()).max(1e-6));
        }
    }
    verdict(&[
        check("input derivatives to order 4", input_worst <= 1e-4, format!("worst relative error {input_worst:.2e}")),
        check(
            "parameter gradients, 5 variants x 20 probes",
            param_worst <= 1e-4,
            format!("worst relative error {param_worst:.2e}"),
        ),
    ])
}

fn c3_integrators(_: &Desk) -> Verdict {
    let one = |v: f64| DenseMatrix::from_vec(1, 1, vec![v]).unwrap();
    let (a, dt): (f64, f64) = (-1.3, 0.01);
    let pairs = KoopmanPairBatch { z0: one(1.0), z1: one((a * dt).exp()), xs: vec![0.0], ts: vec![0.0], dt };
    let g = GeneratorMatrix { a: one(a), library_size: 1 };
    let h = a * dt;
    let exact = (a * dt).exp();
    let closed = [
        (Integrator::Euler, (exact - 1.0 - h).powi(2)),
        (Integrator::Rk4, (exact - (1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0)).powi(2)),
        (Integrator::Expm, 0.0),
    ];
    let worst = closed
        .iter()
        .map(|(i, want)| (koopman_loss(&pairs, &g, *i).unwrap() - want).abs())
        .fold(0.0, f64::max);

    let a3 = DenseMatrix::from_rows(&[&[-0.4, 1.1, 0.0], &[-0.9, -0.2, 0.3], &[0.1, 0.0, -0.7]]);
    let g3 = GeneratorMatrix { a: a3.clone(), library_size: 3 };
    let z0 = DenseMatrix::from_rows(&[&[1.0, -0.5, 0.25]]);
    let dts: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .map(|&dt| {
            let z1 = z0.matmul(&expm(&a3, dt).unwrap().transpose());
            let p = KoopmanPairBatch { z0: z0.clone(), z1, xs: vec![0.0], ts: vec![0.0], dt };
            (dt.ln(), koopman_loss(&p, &g3, Integrator::Rk4).unwrap().sqrt().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    verdict(&[
        check("scalar closed forms", worst <= 1e-12, format!("worst absolute error {worst:.2e}")),
        check("RK4 local error slope", (slope - 5.0).abs() <= 0.2, format!("slope {slope:.3}")),
    ])
}

fn c4_references(_: &Desk) -> Verdict {
    let mut out = Vec::new();
    let mut worst = (0.0f64, SystemId::Heat);
    for id in SystemId::ALL {
        let spec = SystemSpec::new(id);
        let xs = if spec.is_ode() { vec![0.0] } else { linspace(spec.domain.0, spec.domain.1, 33) };
        let r = solve_reference(&spec, &xs, &linspace(0.0, 1.0, 11)).unwrap();
        if !(r.error_estimate <= worst.0) {
            worst = (r.error_estimate, id);
        }
    }
    out.push(check(
        "self-convergence",
        worst.0 < 1e-6,
        format!("largest estimated error {:.2e} ({})", worst.0, worst.1),
    ));

    let spec = SystemSpec::new(SystemId::Schrodinger);
    let n = 256;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let ts = linspace(0.0, 1.0, 6);
    let r = solve_split_step(&spec, &xs, &ts, SpectralSettings::default_for(spec.id)).unwrap();
    let mass: Vec<f64> = (0..ts.len())
        .map(|ti| (0..n).map(|xi| r.at(ti, xi, 0).powi(2) + r.at(ti, xi, 1).powi(2)).sum::<f64>() / n as f64)
        .collect();
    let drift = mass.iter().map(|m| ((m - mass[0]) / mass[0]).abs()).fold(0.0, f64::max);
    out.push(check("Schrodinger mass drift", drift <= 1e-8, format!("{drift:.2e}")));

    let spec = SystemSpec::new(SystemId::Seir);
    let ts = linspace(0.0, 5.0, 51);
    let r = solve_ode_adaptive(&spec, &ts, ODE_TOL).unwrap();
    let drift = (0..ts.len()).map(|ti| (r.state(ti, 0).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    out.push(check("SEIR population drift", drift <= 1e-9, format!("{drift:.2e}")));
    verdict(&out)
}

fn desk_checks(desk: &Desk, runs: &[(SystemId, Variant)], pick: fn(&[RunReport]) -> Vec<Check>) -> Verdict {
    let mut reports = Vec::new();
    for &(s, v) in runs {
        match desk.report(s, v) {
            Ok(r) => reports.push(r),
            Err(e) => return Verdict { passed: false, detail: format!("desk run failed: {e}") },
        }
    }
    verdict(&pick(&reports))
}

fn c5_heat(desk: &Desk) -> Verdict {
    desk_checks(desk, &[(SystemId::Heat, Variant::PikeExpm)], |r| r.iter().filter_map(checks::heat_accuracy).collect())
}

fn c6_stability(desk: &Desk) -> Verdict {
    let runs = [
        (SystemId::Heat, Variant::PikeExpm),
        (SystemId::Burgers, Variant::PikeExpm),
        (SystemId::Burgers, Variant::SpikeExpm),
        (SystemId::Lorenz, Variant::PikeExpm),
    ];
    desk_checks(desk, &runs, |r| r.iter().filter_map(checks::stability).collect())
}

fn c7_sparsity(desk: &Desk) -> Verdict {
    let runs = [(SystemId::Burgers, Variant::PikeExpm), (SystemId::Burgers, Variant::SpikeExpm)];
    desk_checks(desk, &runs, checks::cross_checks)
}

fn c8_valid_time(desk: &Desk) -> Verdict {
    let runs = [(SystemId::Lorenz, Variant::Pinn), (SystemId::Lorenz, Variant::PikeEuler)];
    desk_checks(desk, &runs, checks::cross_checks)
}

fn c9_recovery(desk: &Desk) -> Verdict {
    let mut surrogate_worst = (0.0f64, 1.0f64);
    for spec in SystemSpec::registry() {
        let Some(src) = surrogate_field(&spec) else { continue };
        let grid = MetricGrid::with_resolution(&spec, &spec.train_window, 30, 30);
        let rec = recover_coefficients(&src, &spec, &grid).unwrap();
        let rel = rec.terms.iter().map(|t| t.rel_error).fold(0.0, f64::max);
        surrogate_worst = (surrogate_worst.0.max(rel), surrogate_worst.1.min(rec.r_squared));
    }
    let surrogate = check(
        "closed-form fields",
        surrogate_worst.0 <= 1e-6 && surrogate_worst.1 >= 1.0 - 1e-10,
        format!("worst relative error {:.2e}, lowest R2 {:.12}", surrogate_worst.0, surrogate_worst.1),
    );
    let runs = [(SystemId::Heat, Variant::PikeExpm), (SystemId::Burgers, Variant::PikeExpm)];
    let trained = desk_checks(desk, &runs, |r| r.iter().filter_map(checks::recovery).collect());
    let all = verdict(&[surrogate]);
    Verdict { passed: all.passed && trained.passed, detail: format!("{}; {}", all.detail, trained.detail) }
}

fn c10_conservation(desk: &Desk) -> Verdict {
    let runs: Vec<(SystemId, Variant)> = Variant::ALL.iter().map(|&v| (SystemId::Seir, v)).collect();
    desk_checks(desk, &runs, |r| r.iter().filter_map(checks::population).collect())
}

fn c11_bound(desk: &Desk) -> Verdict {
    if let Err(e) = desk.report(SystemId::Heat, Variant::PikeExpm) {
        return Verdict { passed: false, detail: format!("desk run failed: {e}") };
    }
    let ck = load_checkpoint(&desk.run_dir(SystemId::Heat, Variant::PikeExpm).join("checkpoint")).unwrap();
    let spec = SystemSpec::new(SystemId::Heat);
    let grid = MetricGrid::with_resolution(&spec, &spec.train_window, 100, 100);
    let nodes = bound_nodes(&spec, 20);
    let mut diags = Vec::new();
    for delta in [0.25, 0.5, 1.0, 2.0] {
        let ts = linspace(1.0, 1.0 + delta, 21);
        let reference = solve_reference(&spec, &grid.xs, &ts).unwrap();
        diags.push(ood_bound_diagnostic(&ck.model, &spec, &reference, &nodes).unwrap());
    }
    let values: Vec<f64> = diags.iter().map(|d| d.bound_value).collect();
    let trained_ok = values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[1] >= w[0]);
    let d = &diags[0];
    let sweep: Vec<f64> = (1..=40).map(|k| ood_bound(d.l_g, d.eps_k, d.rho0, 0.1 * k as f64, d.training_error)).collect();
    let sweep_ok = sweep.iter().all(|v| v.is_finite()) && sweep.windows(2).all(|w| w[1] >= w[0]);
    let limit_gap = [0.25, 1.0, 3.0]
        .iter()
        .flat_map(|&delta| [RHO_LIMIT, -RHO_LIMIT].map(|rho| ((growth_factor(rho, delta) - delta) / delta).abs()))
        .fold(0.0, f64::max);
    verdict(&[
        check(
            "trained model, delta 0.25..2",
            trained_ok,
            format!("bounds [{}], observed [{}]", sci(&values), sci(&diags.iter().map(|d| d.observed_error).collect::<Vec<_>>())),
        ),
        check("monotone in delta", sweep_ok, format!("{:.3e} .. {:.3e}", sweep[0], sweep[39])),
        check("limit branch", limit_gap <= 1e-6, format!("largest relative gap {limit_gap:.2e}")),
    ])
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn c12_determinism(desk: &Desk) -> Verdict {
    let root = desk.root.join("determinism");
    let _ = std::fs::remove_dir_all(&root);
    let bin = env!("CARGO_BIN_EXE_spikelab");
    let first = Command::new(bin)
        .args(["run", "--system", "burgers,lorenz", "--variant", "pike-rk4,spike-expm", "--seed", "7"])
        .args(["--steps", "200", "--physics-batch", "256", "--pair-batch", "64", "--jobs", "2"])
        .arg("--out")
        .arg(root.join("first"))
        .env("RUST_LOG", "warn")
        .env("SPIKELAB_CACHE", desk.root.join("cache"))
        .status();
    if !matches!(first, Ok(s) if s.success()) {
        return Verdict { passed: false, detail: format!("initial run failed: {first:?}") };
    }
    let replay = Command::new(bin)
        .arg("replay")
        .arg(root.join("first").join(MANIFEST_FILE))
        .arg("--out")
        .arg(root.join("second"))
        .env("RUST_LOG", "warn")
        .output();
    let Ok(replay) = replay else { return Verdict { passed: false, detail: "replay did not start".into() } };
    let manifest = spikelab_cli::manifest::Manifest::load(&root.join("first").join(MANIFEST_FILE)).unwrap();
    let mut out = Vec::new();
    for run in &manifest.runs {
        let read = |p: &Path| std::fs::read(p.join(&run.dir).join("report.json")).ok();
        let (a, b) = (read(&root.join("first")), read(&root.join("second")));
        out.push(check(&run.dir, a.is_some() && a == b, if a == b { "identical".into() } else { "differs".into() }));
    }
    out.push(check("replay exit", replay.status.success(), format!("{:?}", replay.status.code())));
    verdict(&out)
}

fn main() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let root = std::env::var_os("SPIKELAB_ACCEPTANCE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance"));
    std::fs::create_dir_all(&root).unwrap();
    let desk = Desk { root, reports: RefCell::new(BTreeMap::new()) };
    let criteria: [(&str, fn(&Desk) -> Verdict); 12] = [
        ("matrix exponential versus Taylor series", c1_expm),
        ("automatic differentiation versus finite differences", c2_autodiff),
        ("integrator closed forms and RK4 order", c3_integrators),
        ("reference solver accuracy and invariants", c4_references),
        ("heat pike-expm accuracy", c5_heat),
        ("generator stability after expm runs", c6_stability),
        ("burgers sparsity direction", c7_sparsity),
        ("lorenz valid prediction time", c8_valid_time),
        ("coefficient recovery", c9_recovery),
        ("seir population conservation", c10_conservation),
        ("extrapolation bound coherence", c11_bound),
        ("manifest replay determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = f(&desk);
        let secs = start.elapsed().as_secs_f64();
        println!("{} {n:>2} {title} ({secs:.1}s): {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        if !v.passed {
            failed += 1;
        }
    }
    println!("acceptance: {failed} failing criteria; artifacts under {}", desk.root.display());
    if failed > 0 && std::env::var_os("SPIKELAB_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
