use std::sync::Arc;

use super::JetLayout;
use crate::linalg::DenseMatrix;

/// A batch of `npts` jets, each carrying `layout.len()` coefficients of `cols` features.
///
/// Storage is `data[(p * ncoef + c) * cols + f]`, so the coefficient rows of all
/// points stack into one `(npts * ncoef) × cols` matrix. Plain matrices use the
/// value-only layout, in which case `npts` is simply the row count.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub npts: usize,
    pub layout: Arc<JetLayout>,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(npts: usize, layout: Arc<JetLayout>, cols: usize) -> Self {
        let n = npts * layout.len() * cols;
        Self { npts, layout, cols, data: vec![0.0; n] }
    }

    pub fn plain(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { npts: rows, layout: JetLayout::value_only(), cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::plain(1, 1, vec![v])
    }

    pub fn from_matrix(m: &DenseMatrix) -> Self {
        Self::plain(m.rows(), m.cols(), m.as_slice().to_vec())
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_vec(self.rows(), self.cols, self.data.clone()).expect("shape")
    }

    #[inline]
    pub fn ncoef(&self) -> usize {
        self.layout.len()
    }

    /// Rows of the stacked coefficient matrix.
    #[inline]
    pub fn rows(&self) -> usize {
        self.npts * self.layout.len()
    }

    pub fn is_plain(&self) -> bool {
        self.layout.len() == 1
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.npts == other.npts && self.cols == other.cols && self.layout == other.layout
    }

    #[inline]
    pub fn at(&self, p: usize, c: usize, f: usize) -> f64 {
        self.data[(p * self.ncoef() + c) * self.cols + f]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "not a scalar");
        self.data[0]
    }

    /// Input jets for `(x, t)` coordinates: column 0 seeded in x, column 1 in t.
    /// With `time_only`, a single column seeded in t.
    pub fn seed_inputs(xs: &[f64], ts: &[f64], layout: Arc<JetLayout>, time_only: bool) -> Self {
        assert_eq!(xs.len(), ts.len());
        let npts = ts.len();
        let cols = if time_only { 1 } else { 2 };
        let mut out = Self::zeros(npts, layout.clone(), cols);
        let cx = layout.position(super::MultiIndex::X);
        let ct = layout.position(super::MultiIndex::T);
        let nc = layout.len();
        for p in 0..npts {
            let base = p * nc * cols;
            if time_only {
                out.data[base] = ts[p];
                if let Some(c) = ct {
                    out.data[base + c * cols] = 1.0;
                }
            } else {
                out.data[base] = xs[p];
                out.data[base + 1] = ts[p];
                if let Some(c) = cx {
                    out.data[base + c * cols] = 1.0;
                }
                if let Some(c) = ct {
                    out.data[base + c * cols + 1] = 1.0;
                }
            }
        }
        out
    }
}
