//! Baseline-relative comparison of run reports on one system.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use spikelab::evaluation::RunReport;
use spikelab::systems::SystemId;
use spikelab::training::Variant;

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error("need at least two reports, got {0}")]
    TooFew(usize),
    #[error("reports cover different systems: {0} and {1}")]
    MixedSystems(SystemId, SystemId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Lower,
    Higher,
    /// Reported for reference; no ratio.
    Neutral,
}

/// Which way is better for a flat metric name.
pub fn direction(metric: &str) -> Direction {
    let head = metric.split('/').next().unwrap_or(metric);
    match head {
        "final_loss" | "physics_mse" | "solution_mse" | "nonzero_count" | "conservation" | "coef_rel_error" => {
            Direction::Lower
        }
        "valid_time" | "lyapunov_ratio" | "sparsity_percent" | "coef_r2" | "latent_corr" => Direction::Higher,
        _ => Direction::Neutral,
    }
}

/// Factor by which `value` improves on `baseline`; 1 means equal.
pub fn improvement(metric: &str, baseline: f64, value: f64) -> Option<f64> {
    let (num, den) = match direction(metric) {
        Direction::Lower => (baseline, value),
        Direction::Higher => (value, baseline),
        Direction::Neutral => return None,
    };
    if num == den {
        return Some(1.0);
    }
    let r = num / den;
    (r.is_finite() && r >= 0.0).then_some(r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub metric: String,
    pub baseline: Option<f64>,
    pub values: Vec<Option<f64>>,
    pub improvements: Vec<Option<f64>>,
    pub best: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub system: SystemId,
    pub baseline: String,
    pub columns: Vec<String>,
    pub rows: Vec<CompareRow>,
}

/// Column names: the variant, qualified by seed when seeds differ and by a
/// counter for repeats.
fn labels(reports: &[RunReport]) -> Vec<String> {
    let seeds_differ = reports.iter().any(|r| r.seed != reports[0].seed);
    let mut out: Vec<String> = Vec::new();
    for r in reports {
        let base = if seeds_differ { format!("{} seed {}", r.variant, r.seed) } else { r.variant.to_string() };
        let mut label = base.clone();
        let mut k = 2;
        while out.contains(&label) {
            label = format!("{base} #{k}");
            k += 1;
        }
        out.push(label);
    }
    out
}

/// Compares every report with the first PINN report, or with the first report
/// when no PINN run is given.
pub fn compare(reports: &[RunReport]) -> Result<Comparison, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFew(reports.len()));
    }
    let system = reports[0].system;
    if let Some(r) = reports.iter().find(|r| r.system != system) {
        return Err(CompareError::MixedSystems(system, r.system));
    }
    let names = labels(reports);
    let base_idx = reports.iter().position(|r| r.variant == Variant::Pinn).unwrap_or(0);
    let mut metrics: Vec<String> = Vec::new();
    let flat: Vec<BTreeMap<String, Option<f64>>> = reports
        .iter()
        .map(|r| {
            let m = r.flat_metrics();
            for (k, _) in &m {
                if !metrics.contains(k) {
                    metrics.push(k.clone());
                }
            }
            m.into_iter().collect()
        })
        .collect();
    let others: Vec<usize> = (0..reports.len()).filter(|&i| i != base_idx).collect();
    let get = |i: usize, k: &str| flat[i].get(k).copied().flatten();
    let rows = metrics
        .into_iter()
        .map(|metric| {
            let base = get(base_idx, &metric);
            let values: Vec<Option<f64>> = others.iter().map(|&i| get(i, &metric)).collect();
            let improvements = values.iter().map(|v| improvement(&metric, base?, (*v)?)).collect();
            let mut best: Option<(usize, f64)> = None;
            if direction(&metric) != Direction::Neutral {
                for (i, v) in std::iter::once((base_idx, base)).chain(others.iter().copied().zip(values.iter().copied())) {
                    let Some(v) = v.filter(|v| v.is_finite()) else { continue };
                    let better = match best {
                        None => true,
                        Some((_, b)) => match direction(&metric) {
                            Direction::Lower => v < b,
                            _ => v > b,
                        },
                    };
                    if better {
                        best = Some((i, v));
                    }
                }
            }
            CompareRow { metric, baseline: base, values, improvements, best: best.map(|b| names[b.0].clone()) }
        })
        .collect();
    let columns = others.iter().map(|&i| names[i].clone()).collect();
    Ok(Comparison { system, baseline: names[base_idx].clone(), columns, rows })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.6e}"))
}

fn ratio(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.2}x"))
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header = vec!["metric".to_string(), self.baseline.clone()];
        for c in &self.columns {
            header.push(c.clone());
            header.push(format!("{c} improvement"));
        }
        header.push("best".into());
        let _ = writeln!(out, "{}", header.join(","));
        for r in &self.rows {
            let mut line = vec![r.metric.clone(), cell(r.baseline)];
            for (v, i) in r.values.iter().zip(&r.improvements) {
                line.push(cell(*v));
                line.push(ratio(*i));
            }
            line.push(r.best.clone().unwrap_or_else(|| "N/A".into()));
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    /// Fixed-width rendering for a terminal.
    pub fn to_table(&self) -> String {
        let csv = self.to_csv();
        let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
        let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> =
            (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0)).collect();
        let mut out = format!("system: {} (baseline {})\n", self.system, self.baseline);
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
