//! On-disk cache of reference fields.
//!
//! ```text
//! spikelab-reference 1
//! system <name>
//! solver <tag>
//! grid <nx> <nt> <channels>
//! key <sha256 of system, solver version and grid>
//! content <sha256 of the values>
//! error <estimate>
//! x <nx values>
//! t <nt values>
//! <nt rows of nx * channels values>
//! end
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::{solve_reference, ReferenceError, ReferenceField};
use crate::systems::SystemSpec;

pub const CACHE_ENV: &str = "SPIKELAB_CACHE";
const MAGIC: &str = "spikelab-reference 1";
/// Bumped whenever a solver changes its output.
const SOLVER_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct ReferenceCache {
    dir: PathBuf,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn grid_key(spec: &SystemSpec, xs: &[f64], ts: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{} v{SOLVER_VERSION}", spec.id).as_bytes());
    for v in xs.iter().chain([f64::NAN].iter()).chain(ts) {
        h.update(v.to_bits().to_le_bytes());
    }
    hex(&h.finalize())
}

fn content_hash(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    hex(&h.finalize())
}

fn floats(s: &str) -> Result<Vec<f64>, ReferenceError> {
    s.split_whitespace()
        .map(|v| v.parse().map_err(|_| ReferenceError::Format(format!("bad number {v:?}"))))
        .collect()
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// The cache named by `SPIKELAB_CACHE`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, spec: &SystemSpec, key: &str) -> PathBuf {
        self.dir.join(format!("{}-{}.ref", spec.id, &key[..16]))
    }

    /// Cached field for this grid, solving and storing it when absent or stale.
    pub fn get_or_solve(&self, spec: &SystemSpec, xs: &[f64], ts: &[f64]) -> Result<ReferenceField, ReferenceError> {
        let key = grid_key(spec, xs, ts);
        let path = self.path(spec, &key);
        if let Ok(text) = std::fs::read_to_string(&path) {
            match parse(&text, &key) {
                Ok(field) => return Ok(field),
                Err(e) => log::warn!("regenerating {}: {e}", path.display()),
            }
        }
        let field = solve_reference(spec, xs, ts)?;
        std::fs::create_dir_all(&self.dir)?;
        static WRITES: AtomicUsize = AtomicUsize::new(0);
        let n = WRITES.fetch_add(1, Ordering::Relaxed);
        let tmp = path.with_extension(format!("tmp{}-{n}", std::process::id()));
        std::fs::write(&tmp, render(&field, &key))?;
        std::fs::rename(&tmp, &path)?;
        Ok(field)
    }
}

fn render(f: &ReferenceField, key: &str) -> String {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let mut out = format!("{MAGIC}\nsystem {}\nsolver {}\n", f.system, f.solver);
    let _ = writeln!(out, "grid {} {} {}", f.xs.len(), f.ts.len(), f.channels);
    let _ = writeln!(out, "key {key}\ncontent {}\nerror {:?}", content_hash(&f.values), f.error_estimate);
    let _ = writeln!(out, "x {}\nt {}", join(&f.xs), join(&f.ts));
    for row in f.values.chunks(f.xs.len() * f.channels) {
        let _ = writeln!(out, "{}", join(row));
    }
    out.push_str("end\n");
    out
}

fn parse(text: &str, key: &str) -> Result<ReferenceField, ReferenceError> {
    let bad = |m: &str| ReferenceError::Format(m.to_string());
    let mut lines = text.lines();
    let mut field = |name: &str| -> Result<&str, ReferenceError> {
        let line = lines.next().ok_or_else(|| bad("truncated"))?;
        match line.split_once(' ') {
            Some((k, v)) if k == name => Ok(v),
            _ if name == "magic" && line == MAGIC => Ok(""),
            _ => Err(bad(&format!("expected {name}"))),
        }
    };
    field("magic")?;
    let system = field("system")?.parse().map_err(|_| bad("unknown system"))?;
    let solver = field("solver")?.to_string();
    let dims: Vec<usize> =
        field("grid")?.split(' ').map(|v| v.parse().map_err(|_| bad("grid"))).collect::<Result<_, _>>()?;
    if dims.len() != 3 {
        return Err(bad("grid needs three sizes"));
    }
    if field("key")? != key {
        return Err(bad("key mismatch"));
    }
    let content = field("content")?.to_string();
    let error_estimate = field("error")?.parse().map_err(|_| bad("error"))?;
    let xs = floats(field("x")?)?;
    let ts = floats(field("t")?)?;
    let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for _ in 0..dims[1] {
        values.extend(floats(lines.next().ok_or_else(|| bad("truncated values"))?)?);
    }
    if lines.next() != Some("end") || xs.len() != dims[0] || ts.len() != dims[1] || values.len() != dims[0] * dims[1] * dims[2] {
        return Err(bad("shape mismatch"));
    }
    if content_hash(&values) != content {
        return Err(bad("content hash mismatch"));
    }
    Ok(ReferenceField { system, xs, ts, channels: dims[2], values, solver, error_estimate })
}
