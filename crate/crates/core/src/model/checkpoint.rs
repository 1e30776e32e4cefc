//! Text checkpoint format.
//!
//! ```text
//! spikelab-checkpoint 1
//! meta <key> <value>
//! embedding <state_dim> <degree> <observable_dim> <learnable_w_lib> <has_w_lib>
//! arch <name> <input_dim> <hidden,comma,separated|-> <output_dim> <activate_output>
//! array <name> <rows> <cols>
//! <row values, space separated>
//! end
//! ```
//! Values are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{EmbeddingSpec, GeneratorMatrix, Layer, MlpArch, MlpParams, Model};
use crate::linalg::DenseMatrix;

const MAGIC: &str = "spikelab-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub model: Model,
}

fn write_array(out: &mut String, name: &str, m: &DenseMatrix) {
    let _ = writeln!(out, "array {name} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

fn write_arch(out: &mut String, name: &str, a: &MlpArch) {
    let hidden = if a.hidden.is_empty() {
        "-".to_string()
    } else {
        a.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",")
    };
    let _ = writeln!(out, "arch {name} {} {hidden} {} {}", a.input_dim, a.output_dim, a.activate_output);
}

fn write_mlp(out: &mut String, name: &str, p: &MlpParams) {
    for (i, l) in p.layers.iter().enumerate() {
        write_array(out, &format!("{name}.w{i}"), &l.w);
        let b = DenseMatrix::from_vec(1, l.b.len(), l.b.clone()).expect("row");
        write_array(out, &format!("{name}.b{i}"), &b);
    }
}

pub fn to_text(ck: &Checkpoint) -> String {
    let mut out = format!("{MAGIC} {VERSION}\n");
    for (k, v) in &ck.meta {
        assert!(!k.contains(char::is_whitespace) && !v.contains('\n'), "metadata must be single-token keys");
        let _ = writeln!(out, "meta {k} {v}");
    }
    let e = &ck.model.embedding;
    let _ = writeln!(
        out,
        "embedding {} {} {} {} {}",
        e.state_dim,
        e.degree,
        e.observable_dim,
        e.learnable_w_lib,
        e.w_lib.is_some()
    );
    write_arch(&mut out, "solution", &ck.model.solution.arch);
    if let Some(l) = &e.latent {
        write_arch(&mut out, "latent", &l.arch);
    }
    write_mlp(&mut out, "solution", &ck.model.solution);
    if let Some(l) = &e.latent {
        write_mlp(&mut out, "latent", l);
    }
    if let Some(w) = &e.w_lib {
        write_array(&mut out, "w_lib", w);
    }
    write_array(&mut out, "generator", &ck.model.generator.a);
    out.push_str("end\n");
    out
}

/// Writes via a temporary file and rename so readers never see a partial file.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, to_text(ck))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    from_text(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> CheckpointError {
        CheckpointError::Parse { line: self.line, msg: msg.into() }
    }
}

fn parse<T: std::str::FromStr>(lines: &Lines, s: &str) -> Result<T, CheckpointError> {
    s.parse().map_err(|_| lines.err(format!("cannot parse {s:?}")))
}

fn parse_arch(lines: &Lines, f: &[&str]) -> Result<MlpArch, CheckpointError> {
    if f.len() != 6 {
        return Err(lines.err("arch line needs 5 fields"));
    }
    let hidden = if f[3] == "-" {
        Vec::new()
    } else {
        f[3].split(',').map(|h| parse(lines, h)).collect::<Result<_, _>>()?
    };
    Ok(MlpArch {
        input_dim: parse(lines, f[2])?,
        hidden,
        output_dim: parse(lines, f[4])?,
        activate_output: parse(lines, f[5])?,
    })
}

pub fn from_text(text: &str) -> Result<Checkpoint, CheckpointError> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let header = lines.next()?;
    if header != format!("{MAGIC} {VERSION}") {
        return Err(lines.err(format!("unsupported header {header:?}")));
    }
    let mut meta = BTreeMap::new();
    let mut emb: Option<(usize, usize, usize, bool, bool)> = None;
    let mut archs: BTreeMap<String, MlpArch> = BTreeMap::new();
    let mut arrays: BTreeMap<String, DenseMatrix> = BTreeMap::new();
    loop {
        let line = lines.next()?;
        let fields: Vec<&str> = line.split(' ').collect();
        match fields[0] {
            "end" => break,
            "meta" => {
                let mut parts = line.splitn(3, ' ');
                parts.next();
                let k = parts.next().ok_or_else(|| lines.err("meta without key"))?;
                meta.insert(k.to_string(), parts.next().unwrap_or("").to_string());
            }
            "embedding" => {
                if fields.len() != 6 {
                    return Err(lines.err("embedding line needs 5 fields"));
                }
                emb = Some((
                    parse(&lines, fields[1])?,
                    parse(&lines, fields[2])?,
                    parse(&lines, fields[3])?,
                    parse(&lines, fields[4])?,
                    parse(&lines, fields[5])?,
                ));
            }
            "arch" => {
                let a = parse_arch(&lines, &fields)?;
                archs.insert(fields.get(1).copied().unwrap_or_default().to_string(), a);
            }
            "array" => {
                if fields.len() != 4 {
                    return Err(lines.err("array line needs name rows cols"));
                }
                let rows: usize = parse(&lines, fields[2])?;
                let cols: usize = parse(&lines, fields[3])?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let row = lines.next()?;
                    let before = data.len();
                    for v in row.split(' ').filter(|s| !s.is_empty()) {
                        data.push(parse::<f64>(&lines, v)?);
                    }
                    if data.len() - before != cols {
                        return Err(lines.err(format!("expected {cols} values")));
                    }
                }
                let m = DenseMatrix::from_vec(rows, cols, data).map_err(|e| lines.err(e.to_string()))?;
                arrays.insert(fields[1].to_string(), m);
            }
            other => return Err(lines.err(format!("unknown record {other:?}"))),
        }
    }

    let (state_dim, degree, observable_dim, learnable_w_lib, has_w_lib) =
        emb.ok_or_else(|| lines.err("missing embedding record"))?;
    let mut take_mlp = |name: &str| -> Result<Option<MlpParams>, CheckpointError> {
        let Some(arch) = archs.remove(name) else { return Ok(None) };
        let n = arch.widths().len() - 1;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let w = arrays.remove(&format!("{name}.w{i}")).ok_or_else(|| lines.err(format!("missing {name}.w{i}")))?;
            let b = arrays.remove(&format!("{name}.b{i}")).ok_or_else(|| lines.err(format!("missing {name}.b{i}")))?;
            layers.push(Layer { w, b: b.into_vec() });
        }
        let p = MlpParams { arch, layers };
        p.validate().map_err(|e| lines.err(e))?;
        Ok(Some(p))
    };
    let solution = take_mlp("solution")?.ok_or_else(|| lines.err("missing solution network"))?;
    let latent = take_mlp("latent")?;
    let w_lib = if has_w_lib {
        Some(arrays.remove("w_lib").ok_or_else(|| lines.err("missing w_lib"))?)
    } else {
        None
    };
    let a = arrays.remove("generator").ok_or_else(|| lines.err("missing generator"))?;
    let embedding = EmbeddingSpec { state_dim, degree, observable_dim, w_lib, learnable_w_lib, latent };
    embedding.validate().map_err(|e| lines.err(e))?;
    if a.rows() != observable_dim || a.cols() != observable_dim {
        return Err(lines.err("generator shape does not match observable dim"));
    }
    let generator = GeneratorMatrix { a, library_size: embedding.library_size() };
    Ok(Checkpoint { meta, model: Model { solution, embedding, generator } })
}
