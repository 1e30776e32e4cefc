//! Embeds a content hash of the workspace sources so manifests can name the
//! exact code that produced them.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

fn collect(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() {
            collect(&p, out);
        } else if matches!(p.extension().and_then(|e| e.to_str()), Some("rs") | Some("toml")) {
            out.push(p);
        }
    }
}

fn main() {
    let cli = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let crates = cli.parent().unwrap().to_path_buf();
    let mut files = Vec::new();
    for name in ["core", "cli"] {
        let root = crates.join(name);
        println!("cargo:rerun-if-changed={}", root.join("src").display());
        println!("cargo:rerun-if-changed={}", root.join("Cargo.toml").display());
        collect(&root.join("src"), &mut files);
        files.push(root.join("Cargo.toml"));
    }
    files.sort();
    let mut h = Sha256::new();
    for f in &files {
        let rel = f.strip_prefix(&crates).unwrap_or(f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(f).unwrap_or_default());
        h.update([0]);
    }
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    println!("cargo:rustc-env=SPIKELAB_SOURCE_HASH={hex}");
}
