//! Command-line entry points.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use spikelab::evaluation::RunReport;
use spikelab::reference::ReferenceCache;
use spikelab::systems::{SystemId, SystemSpec};
use spikelab::training::Variant;

use crate::checks::all_checks;
use crate::compare::compare;
use crate::config::FileConfig;
use crate::manifest::{file_entry, now_unix, Manifest, ManifestFile, MANIFEST_SCHEMA, SOURCE_HASH};
use crate::runner::{evaluate_checkpoint, execute_all, RunError, RunOutcome, RunPlan, RunStatus, REPORT_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TABLE_FILE: &str = "physics_in_domain.csv";

/// Koopman and sparsity weights of the ablation smoke grid.
pub const ABLATION_KOOPMAN: [f64; 2] = [0.01, 0.1];
pub const ABLATION_SPARSE: [f64; 2] = [1e-3, 1e-2];

#[derive(Parser, Debug)]
#[command(name = "spikelab", version, about = "Train and evaluate physics-informed Koopman models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train, evaluate and write artifacts for every requested run.
    Run(RunArgs),
    /// Tabulate reports on one system against the PINN baseline.
    Compare(CompareArgs),
    /// Re-run the experiments of a manifest and verify their reports.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// 2×2 grid over the Koopman and sparsity weights with spike-expm.
    LambdaGrid,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// System names separated by commas, or `all`.
    #[arg(long = "system", value_delimiter = ',')]
    pub systems: Vec<String>,
    /// Variant names separated by commas, or `all` (the default).
    #[arg(long = "variant", value_delimiter = ',')]
    pub variants: Vec<String>,
    /// Seeds separated by commas [default: 0].
    #[arg(long = "seed", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output root [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with [run], [train], [model], [collocation] and [eval] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Runs trained in parallel [default: 1].
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
    /// Re-evaluate a saved checkpoint instead of training.
    #[arg(long, value_name = "CHECKPOINT")]
    pub metrics_only: Option<PathBuf>,
    /// Apply the acceptance checks to the finished runs.
    #[arg(long)]
    pub check: bool,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub physics_batch: Option<usize>,
    #[arg(long)]
    pub pair_batch: Option<usize>,
    /// Hidden widths of the solution network, separated by commas.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Interior collocation points.
    #[arg(long)]
    pub interior: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Report files, or run directories holding a report.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Failed(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Failed(_) => EXIT_FAILED,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Failed(m) => f.write_str(m),
        }
    }
}

/// Runs the parsed command and returns the process exit code.
pub fn dispatch(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(a) => run(&a),
        Command::Compare(a) => compare_cmd(&a),
        Command::Replay(a) => replay(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}

impl RunArgs {
    fn as_config(&self) -> FileConfig {
        let mut c = FileConfig::default();
        let nonempty = |v: &Vec<String>| (!v.is_empty()).then(|| v.clone());
        c.run.systems = nonempty(&self.systems);
        c.run.variants = nonempty(&self.variants);
        c.run.seeds = (!self.seeds.is_empty()).then(|| self.seeds.clone());
        c.run.out = self.out.clone();
        c.run.jobs = self.jobs;
        c.train.steps = self.steps;
        c.train.lr = self.lr;
        c.train.physics_batch = self.physics_batch;
        c.train.pair_batch = self.pair_batch;
        c.model.hidden = self.hidden.clone();
        c.collocation.interior = self.interior;
        c
    }
}

/// Distinct items in first-seen order.
fn unique<T: PartialEq>(items: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn parse_systems(names: &[String]) -> Result<Vec<SystemId>, Failure> {
    if names.is_empty() {
        return Err(Failure::Usage("no system given; pass --system <name|all>".into()));
    }
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(SystemId::ALL);
        } else {
            out.push(n.parse().map_err(|e| Failure::Usage(format!("{e}")))?);
        }
    }
    Ok(unique(out))
}

fn parse_variants(names: Option<&Vec<String>>) -> Result<Vec<Variant>, Failure> {
    let Some(names) = names else { return Ok(Variant::ALL.to_vec()) };
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(Variant::ALL);
        } else {
            out.push(n.parse().map_err(|e| Failure::Usage(format!("{e}")))?);
        }
    }
    Ok(unique(out))
}

/// The runs requested by a merged configuration.
pub fn plan_runs(config: &FileConfig, ablation: Option<Ablation>) -> Result<Vec<RunPlan>, Failure> {
    let systems = parse_systems(config.run.systems.as_deref().unwrap_or_default())?;
    let variants = parse_variants(config.run.variants.as_ref())?;
    let seeds = config.run.seeds.clone().unwrap_or_else(|| vec![0]);
    let eval = config.eval_settings();
    let mut plans = Vec::new();
    for &system in &systems {
        let spec = SystemSpec::new(system);
        for &seed in &seeds {
            let mut push = |variant: Variant, tag: Option<String>, weights: Option<(f64, f64)>| {
                let mut train = config.train_config(&spec, variant, seed);
                if let Some((k, s)) = weights {
                    (train.lambda_koopman, train.lambda_sparse) = (k, s);
                }
                plans.push(RunPlan { system, variant, seed, tag, train, eval: eval.clone() });
            };
            match ablation {
                Some(Ablation::LambdaGrid) => {
                    for k in ABLATION_KOOPMAN {
                        for s in ABLATION_SPARSE {
                            push(Variant::SpikeExpm, Some(format!("lk{k}-ls{s}")), Some((k, s)));
                        }
                    }
                }
                None => variants.iter().for_each(|&v| push(v, None, None)),
            }
        }
    }
    for p in &plans {
        p.train.validate().map_err(|e| Failure::Usage(format!("{} {}: {e}", p.system, p.label())))?;
    }
    Ok(plans)
}

fn run(args: &RunArgs) -> Result<i32, Failure> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => FileConfig::default(),
    };
    let config = file.overlay(&args.as_config());
    let out = config.run.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let cache = ReferenceCache::from_env();
    let started = now_unix();

    let (plans, results) = match &args.metrics_only {
        Some(ck) => {
            let r = evaluate_checkpoint(ck, &out, cache.as_ref());
            if let Err(e @ (RunError::Checkpoint(_) | RunError::Metadata(_))) = &r {
                return Err(Failure::Usage(format!("{}: {e}", ck.display())));
            }
            let plans = r.as_ref().map(|o| vec![o.plan.clone()]).unwrap_or_default();
            (plans, vec![r])
        }
        None => {
            let plans = plan_runs(&config, args.ablation)?;
            let jobs = config.run.jobs.unwrap_or(1);
            log::info!("{} runs on {jobs} workers into {}", plans.len(), out.display());
            let results = execute_all(&plans, &out, jobs, cache.as_ref());
            (plans, results)
        }
    };
    let code = finalize(&out, &config, &plans, &results, args.check, started)?;
    Ok(code)
}

/// Writes the combined tables and the manifest, prints check results and
/// returns the exit code.
fn finalize(
    out: &Path,
    config: &FileConfig,
    plans: &[RunPlan],
    results: &[Result<RunOutcome, RunError>],
    check: bool,
    started: u64,
) -> Result<i32, Failure> {
    let io = |e: std::io::Error| Failure::Failed(format!("writing artifacts: {e}"));
    let outcomes: Vec<&RunOutcome> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let reports: Vec<&RunReport> = outcomes.iter().filter_map(|o| o.report.as_ref()).collect();
    std::fs::create_dir_all(out).map_err(io)?;
    let mut files: Vec<PathBuf> = outcomes.iter().flat_map(|o| o.files.iter().cloned()).collect();
    for (name, text) in [(SUMMARY_FILE, summary_csv(&outcomes)), (TABLE_FILE, physics_table(&outcomes))] {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(io)?;
        files.push(path);
    }

    let mut code = EXIT_OK;
    for r in results {
        match r {
            Err(e) => {
                eprintln!("run failed: {e}");
                code = code.max(EXIT_FAILED);
            }
            Ok(o) => {
                if let RunStatus::NonFinite { term, step } = &o.status {
                    eprintln!("{}: non-finite {term} loss at step {step}; partial artifacts kept", o.dir.display());
                    code = EXIT_NON_FINITE;
                }
            }
        }
    }
    if check {
        let owned: Vec<RunReport> = reports.iter().map(|r| (*r).clone()).collect();
        for c in all_checks(&owned) {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            if !c.passed {
                code = code.max(EXIT_FAILED);
            }
        }
    }

    let mut entries: Vec<ManifestFile> = Vec::new();
    for f in &files {
        entries.push(file_entry(out, f).map_err(io)?);
    }
    let runs = outcomes.iter().map(|o| Manifest::run_entry(out, o)).collect::<Result<_, _>>().map_err(io)?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        source_sha256: SOURCE_HASH.into(),
        started_unix: started,
        finished_unix: now_unix(),
        config: config.clone(),
        systems: unique(plans.iter().map(|p| p.system)),
        variants: unique(plans.iter().map(|p| p.variant)),
        seeds: unique(plans.iter().map(|p| p.seed)),
        runs,
        files: entries,
    };
    let path = manifest.write(out).map_err(io)?;
    log::info!("manifest {}", path.display());
    Ok(code)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:e}"))
}

/// Every metric of every run in long form.
pub fn summary_csv(outcomes: &[&RunOutcome]) -> String {
    let mut s = String::from("system,variant,seed,status,metric,value\n");
    for o in outcomes {
        let status = crate::manifest::status_label(&o.status);
        let p = &o.plan;
        match &o.report {
            Some(r) => {
                for (k, v) in r.flat_metrics() {
                    let _ = writeln!(s, "{},{},{},{status},{k},{}", p.system, p.label(), p.seed, fmt(v));
                }
            }
            None => {
                let _ = writeln!(s, "{},{},{},{status},,", p.system, p.label(), p.seed);
            }
        }
    }
    s
}

/// In-domain physics residual MSE with systems as rows and variants as
/// columns, averaged over seeds.
pub fn physics_table(outcomes: &[&RunOutcome]) -> String {
    let mut systems: Vec<SystemId> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut sums: BTreeMap<(SystemId, String), (f64, usize)> = BTreeMap::new();
    for o in outcomes {
        let Some(r) = &o.report else { continue };
        let label = o.plan.label();
        if !systems.contains(&r.system) {
            systems.push(r.system);
        }
        if !labels.contains(&label) {
            labels.push(label.clone());
        }
        if let Some(w) = r.windows.iter().find(|w| w.window == "in-domain") {
            let e = sums.entry((r.system, label)).or_insert((0.0, 0));
            e.0 += w.physics_mse;
            e.1 += 1;
        }
    }
    systems.sort();
    let rank = |l: &String| Variant::ALL.iter().position(|v| v.as_str() == l).unwrap_or(Variant::ALL.len());
    labels.sort_by_key(|l| (rank(l), l.clone()));
    let mut s = format!("system,{}\n", labels.join(","));
    for sys in systems {
        let cells: Vec<String> =
            labels.iter().map(|l| fmt(sums.get(&(sys, l.clone())).map(|(t, n)| t / *n as f64))).collect();
        let _ = writeln!(s, "{sys},{}", cells.join(","));
    }
    s
}

fn load_report(path: &Path) -> Result<RunReport, Failure> {
    let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))?;
    RunReport::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))
}

fn compare_cmd(args: &CompareArgs) -> Result<i32, Failure> {
    let reports = args.reports.iter().map(|p| load_report(p)).collect::<Result<Vec<_>, _>>()?;
    let table = compare(&reports).map_err(|e| Failure::Usage(e.to_string()))?;
    print!("{}", table.to_table());
    if let Some(path) = &args.out {
        std::fs::write(path, table.to_csv()).map_err(|e| Failure::Failed(format!("{}: {e}", path.display())))?;
    }
    Ok(EXIT_OK)
}

fn replay(args: &ReplayArgs) -> Result<i32, Failure> {
    let manifest = Manifest::load(&args.manifest).map_err(Failure::Usage)?;
    if manifest.source_sha256 != SOURCE_HASH {
        log::warn!("manifest was produced by different sources ({})", manifest.source_sha256);
    }
    let plans: Vec<RunPlan> = manifest.runs.iter().map(|r| r.plan.clone()).collect();
    let started = now_unix();
    let results = execute_all(&plans, &args.out, args.jobs.unwrap_or(1), ReferenceCache::from_env().as_ref());
    let mut code = finalize(&args.out, &manifest.config, &plans, &results, false, started)?;
    for (entry, result) in manifest.runs.iter().zip(&results) {
        let fresh = result.as_ref().ok().and_then(|o| {
            o.report.as_ref().and_then(|_| std::fs::read(o.dir.join(REPORT_FILE)).ok())
        });
        let fresh = fresh.map(|b| crate::manifest::sha256_hex(&b));
        let same = fresh == entry.report_sha256;
        println!("{} {}", if same { "MATCH" } else { "DIFFER" }, entry.dir);
        if !same {
            code = code.max(EXIT_FAILED);
        }
    }
    Ok(code)
}
