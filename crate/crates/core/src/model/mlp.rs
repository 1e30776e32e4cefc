use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, JetLayout, Tape, Tensor, Var};
use crate::linalg::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Apply tanh after the last layer too.
    pub activate_output: bool,
}

impl MlpArch {
    /// Widths of every layer boundary, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`
    pub w: DenseMatrix,
    pub b: Vec<f64>,
}

/// A fully connected tanh network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub arch: MlpArch,
    pub layers: Vec<Layer>,
}

/// Tape leaves for one network's weights and biases.
#[derive(Clone)]
pub struct MlpVars<'t> {
    pub layers: Vec<(Var<'t>, Var<'t>)>,
    activate_output: bool,
}

impl MlpParams {
    /// Xavier-uniform weights and zero biases.
    pub fn init<R: Rng>(arch: MlpArch, rng: &mut R) -> Self {
        let widths = arch.widths();
        let layers = widths
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
                Layer { w: DenseMatrix::from_vec(fan_out, fan_in, data).expect("shape"), b: vec![0.0; fan_out] }
            })
            .collect();
        Self { arch, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.as_slice().len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }

    /// Checks that layer shapes chain from input to output.
    pub fn validate(&self) -> Result<(), String> {
        let widths = self.arch.widths();
        if widths.len() != self.layers.len() + 1 {
            return Err(format!("{} layers for {} widths", self.layers.len(), widths.len()));
        }
        for (i, (l, io)) in self.layers.iter().zip(widths.windows(2)).enumerate() {
            if l.w.cols() != io[0] || l.w.rows() != io[1] || l.b.len() != io[1] {
                return Err(format!("layer {i} has shape {}x{} (bias {})", l.w.rows(), l.w.cols(), l.b.len()));
            }
        }
        Ok(())
    }

    /// Forward pass on a batch of jets.
    pub fn forward(&self, input: &Tensor) -> Tensor {
        let last = self.layers.len() - 1;
        let mut h = input.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = kernels::affine_forward(&h, l.w.as_slice(), &l.b, l.w.rows());
            if i < last || self.arch.activate_output {
                h = kernels::tanh_forward(&h);
            }
        }
        h
    }

    /// Plain forward pass of a single input vector.
    pub fn forward_point(&self, input: &[f64]) -> Vec<f64> {
        self.forward(&Tensor::plain(1, input.len(), input.to_vec())).data
    }

    /// Forward pass over many points, in chunks to bound memory.
    pub fn forward_batched(&self, xs: &[f64], ts: &[f64], layout: &std::sync::Arc<JetLayout>) -> Tensor {
        const CHUNK: usize = 1024;
        let time_only = self.input_dim() == 1;
        let mut out = Tensor::zeros(ts.len(), layout.clone(), self.output_dim());
        let block = layout.len() * self.output_dim();
        for start in (0..ts.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(ts.len());
            let x = Tensor::seed_inputs(&xs[start..end], &ts[start..end], layout.clone(), time_only);
            let y = self.forward(&x);
            out.data[start * block..end * block].copy_from_slice(&y.data);
        }
        out
    }

    /// Parameter arrays in storage order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(Tensor::from_matrix(&l.w));
            out.push(Tensor::plain(1, l.b.len(), l.b.clone()));
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in self.layers.iter_mut() {
            out.push(l.w.as_mut_slice());
            out.push(l.b.as_mut_slice());
        }
        out
    }

    pub fn vars<'t>(&self, leaves: &[Var<'t>]) -> MlpVars<'t> {
        assert_eq!(leaves.len(), 2 * self.layers.len());
        MlpVars {
            layers: leaves.chunks(2).map(|c| (c[0], c[1])).collect(),
            activate_output: self.arch.activate_output,
        }
    }

    pub fn register<'t>(&self, tape: &'t Tape) -> MlpVars<'t> {
        let leaves: Vec<Var> = self.tensors().into_iter().map(|t| tape.leaf(t)).collect();
        self.vars(&leaves)
    }

    /// Spectral norms of the weight matrices, first layer first.
    pub fn layer_spectral_norms(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.w.spectral_norm()).collect()
    }
}

impl<'t> MlpVars<'t> {
    pub fn forward(&self, x: Var<'t>) -> Var<'t> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.affine(*w, *b);
            if i < last || self.activate_output {
                h = h.tanh();
            }
        }
        h
    }
}
