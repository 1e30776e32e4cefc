//! Solution network, observable embedding and Koopman generator.

mod checkpoint;
mod mlp;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use mlp::{Layer, MlpArch, MlpParams, MlpVars};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, Tape, Tensor, Var};
use crate::linalg::DenseMatrix;

/// Exponent multisets of all monomials in `n` variables up to degree `d`, graded
/// lexicographically: `[], [0], [1], .., [0,0], [0,1], ..`.
pub fn monomials(n: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut prev: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::new();
        for m in &prev {
            let start = m.last().copied().unwrap_or(0);
            for i in start..n {
                let mut e = m.clone();
                e.push(i);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        prev = next;
    }
    out
}

/// `C(n + d, d)`
pub fn library_size(n: usize, d: usize) -> usize {
    (1..=d).fold(1usize, |acc, k| acc * (n + k) / k)
}

/// All monomials of `u` up to degree `d` in graded lexicographic order.
pub fn polynomial_library(u: &[f64], d: usize) -> Vec<f64> {
    monomials(u.len(), d).iter().map(|m| m.iter().map(|&i| u[i]).product()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub state_dim: usize,
    pub degree: usize,
    pub observable_dim: usize,
    /// Library projection; `None` is the identity.
    pub w_lib: Option<DenseMatrix>,
    pub learnable_w_lib: bool,
    /// Latent MLP branch; absent when the library fills the whole observable.
    pub latent: Option<MlpParams>,
}

impl EmbeddingSpec {
    pub fn library_size(&self) -> usize {
        library_size(self.state_dim, self.degree)
    }

    pub fn latent_width(&self) -> usize {
        self.observable_dim - self.library_size()
    }

    pub fn validate(&self) -> Result<(), String> {
        let lib = self.library_size();
        if self.observable_dim < lib {
            return Err(format!("observable dim {} below library size {lib}", self.observable_dim));
        }
        if let Some(w) = &self.w_lib {
            if w.rows() != lib || w.cols() != lib {
                return Err(format!("W_lib is {}x{}, expected {lib}x{lib}", w.rows(), w.cols()));
            }
        }
        match &self.latent {
            Some(l) if l.input_dim() != self.state_dim || l.output_dim() != self.latent_width() => {
                Err("latent MLP shape does not match the embedding".into())
            }
            None if self.latent_width() != 0 => Err("latent width is nonzero but no latent MLP".into()),
            Some(l) => l.validate(),
            None => Ok(()),
        }
    }
}

/// `g(u) = [W_lib ψ_d(u), mlp(u)]`
pub fn embed(u: &[f64], spec: &EmbeddingSpec) -> Vec<f64> {
    let lib = polynomial_library(u, spec.degree);
    let mut z = match &spec.w_lib {
        Some(w) => w.matvec(&lib),
        None => lib,
    };
    if let Some(l) = &spec.latent {
        z.extend(l.forward_point(u));
    }
    z
}

/// The continuous-time generator; library rows/columns come first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    pub a: DenseMatrix,
    pub library_size: usize,
}

impl GeneratorMatrix {
    pub fn zeros(dim: usize, library_size: usize) -> Self {
        Self { a: DenseMatrix::zeros(dim, dim), library_size }
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// The library-to-library block.
    pub fn lib_block(&self) -> DenseMatrix {
        let l = self.library_size;
        let mut out = DenseMatrix::zeros(l, l);
        for i in 0..l {
            for j in 0..l {
                out[(i, j)] = self.a[(i, j)];
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// 2 for `(x, t)` inputs, 1 for time-only systems.
    pub input_dim: usize,
    pub state_dim: usize,
    pub hidden: Vec<usize>,
    pub observable_dim: usize,
    pub degree: usize,
    pub latent_hidden: Vec<usize>,
    pub learnable_w_lib: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize, state_dim: usize) -> Self {
        Self {
            input_dim,
            state_dim,
            hidden: vec![128; 4],
            observable_dim: 64,
            degree: 2,
            latent_hidden: vec![64, 64],
            learnable_w_lib: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub solution: MlpParams,
    pub embedding: EmbeddingSpec,
    pub generator: GeneratorMatrix,
}

/// Deterministic initialisation: Xavier-uniform weights, zero biases, `A = 0`.
pub fn init_params(config: &ModelConfig, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solution = MlpParams::init(
        MlpArch {
            input_dim: config.input_dim,
            hidden: config.hidden.clone(),
            output_dim: config.state_dim,
            activate_output: false,
        },
        &mut rng,
    );
    let lib = library_size(config.state_dim, config.degree);
    assert!(config.observable_dim >= lib, "observable dim below library size");
    let width = config.observable_dim - lib;
    let latent = (width > 0).then(|| {
        MlpParams::init(
            MlpArch {
                input_dim: config.state_dim,
                hidden: config.latent_hidden.clone(),
                output_dim: width,
                activate_output: true,
            },
            &mut rng,
        )
    });
    let embedding = EmbeddingSpec {
        state_dim: config.state_dim,
        degree: config.degree,
        observable_dim: config.observable_dim,
        w_lib: config.learnable_w_lib.then(|| DenseMatrix::identity(lib)),
        learnable_w_lib: config.learnable_w_lib,
        latent,
    };
    Model { solution, embedding, generator: GeneratorMatrix::zeros(config.observable_dim, lib) }
}

/// `u_θ(x, t)`; `x` is ignored by time-only networks.
pub fn evaluate_solution(params: &MlpParams, x: f64, t: f64) -> Vec<f64> {
    if params.input_dim() == 1 {
        params.forward_point(&[t])
    } else {
        params.forward_point(&[x, t])
    }
}

/// Tape handles for every trainable array of a [`Model`].
pub struct ModelVars<'t> {
    pub solution: MlpVars<'t>,
    pub latent: Option<MlpVars<'t>>,
    pub w_lib: Option<Var<'t>>,
    pub a: Var<'t>,
    monomials: Vec<Vec<usize>>,
}

impl Model {
    /// Trainable arrays in a fixed order: solution net, latent net, W_lib when learnable, A.
    pub fn param_tensors(&self) -> Vec<Tensor> {
        let mut out = self.solution.tensors();
        if let Some(l) = &self.embedding.latent {
            out.extend(l.tensors());
        }
        if self.embedding.learnable_w_lib {
            out.push(Tensor::from_matrix(self.embedding.w_lib.as_ref().expect("learnable W_lib is stored")));
        }
        out.push(Tensor::from_matrix(&self.generator.a));
        out
    }

    /// Mutable views in the order of [`Model::param_tensors`].
    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.solution.arrays_mut();
        if let Some(l) = self.embedding.latent.as_mut() {
            out.extend(l.arrays_mut());
        }
        if self.embedding.learnable_w_lib {
            out.push(self.embedding.w_lib.as_mut().expect("learnable W_lib is stored").as_mut_slice());
        }
        out.push(self.generator.a.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.param_tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Wraps tape leaves created from [`Model::param_tensors`].
    pub fn vars<'t>(&self, leaves: &[Var<'t>]) -> ModelVars<'t> {
        let ns = 2 * self.solution.layers.len();
        let solution = self.solution.vars(&leaves[..ns]);
        let mut pos = ns;
        let latent = self.embedding.latent.as_ref().map(|l| {
            let k = 2 * l.layers.len();
            let v = l.vars(&leaves[pos..pos + k]);
            pos += k;
            v
        });
        let tape = leaves[0].tape();
        let w_lib = if self.embedding.learnable_w_lib {
            pos += 1;
            Some(leaves[pos - 1])
        } else {
            self.embedding.w_lib.as_ref().map(|w| tape.constant(Tensor::from_matrix(w)))
        };
        let a = leaves[pos];
        assert_eq!(pos + 1, leaves.len(), "leaf count does not match the model");
        ModelVars {
            solution,
            latent,
            w_lib,
            a,
            monomials: monomials(self.embedding.state_dim, self.embedding.degree),
        }
    }

    pub fn register<'t>(&self, tape: &'t Tape) -> ModelVars<'t> {
        let leaves: Vec<Var> = self.param_tensors().into_iter().map(|t| tape.leaf(t)).collect();
        self.vars(&leaves)
    }
}

impl<'t> ModelVars<'t> {
    /// Observables for a plain `npts × n` batch of states.
    pub fn embed(&self, u: Var<'t>) -> Var<'t> {
        let tape = u.tape();
        let npts = u.value().npts;
        let n = u.value().cols;
        let cols: Vec<Var> = (0..n).map(|i| u.column(i)).collect();
        let mut parts = Vec::with_capacity(self.monomials.len() + 1);
        for m in &self.monomials {
            let term = match m.split_first() {
                None => tape.constant(Tensor::plain(npts, 1, vec![1.0; npts])),
                Some((first, rest)) => rest.iter().fold(cols[*first], |acc, &i| acc * cols[i]),
            };
            parts.push(term);
        }
        let mut lib = concat(&parts);
        if let Some(w) = self.w_lib {
            lib = lib.matmul_t(w);
        }
        match &self.latent {
            Some(l) => concat(&[lib, l.forward(u)]),
            None => lib,
        }
    }
}
