//! Experiment manifest: enough to re-run every experiment of an invocation and
//! to verify what it produced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spikelab::systems::SystemId;
use spikelab::training::Variant;

use crate::config::FileConfig;
use crate::runner::{RunOutcome, RunPlan, RunStatus, REPORT_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

/// Content hash of the sources this binary was built from.
pub const SOURCE_HASH: &str = env!("SPIKELAB_SOURCE_HASH");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub plan: RunPlan,
    /// Run directory relative to the output root.
    pub dir: String,
    pub status: String,
    pub report_sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Path relative to the output root.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub source_sha256: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: FileConfig,
    pub systems: Vec<SystemId>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub runs: Vec<ManifestRun>,
    pub files: Vec<ManifestFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_entry(root: &Path, path: &Path) -> std::io::Result<ManifestFile> {
    let bytes = std::fs::read(path)?;
    Ok(ManifestFile { path: relative(root, path), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

pub fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn status_label(s: &RunStatus) -> String {
    match s {
        RunStatus::Completed => "completed".into(),
        RunStatus::NonFinite { term, step } => format!("non-finite {term} loss at step {step}"),
    }
}

impl Manifest {
    pub fn run_entry(root: &Path, outcome: &RunOutcome) -> std::io::Result<ManifestRun> {
        let report = outcome.dir.join(REPORT_FILE);
        let report_sha256 = match outcome.report {
            Some(_) => Some(sha256_hex(&std::fs::read(report)?)),
            None => None,
        };
        Ok(ManifestRun {
            plan: outcome.plan.clone(),
            dir: relative(root, &outcome.dir),
            status: status_label(&outcome.status),
            report_sha256,
        })
    }

    /// Writes the manifest under `root`. Call after every other artifact exists.
    pub fn write(&self, root: &Path) -> std::io::Result<PathBuf> {
        let path = root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
