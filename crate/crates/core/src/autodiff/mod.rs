//! Input derivatives by truncated Taylor propagation and parameter gradients by a
//! reverse tape whose nodes carry batches of jets.

mod field;
mod jet;
pub mod kernels;
mod layout;
mod tape;
mod tensor;

use std::collections::BTreeMap;
use std::fmt;

pub use field::{Field, Samples};
pub use jet::{Jet, JET_LEN, MAX_ORDER};
pub use layout::JetLayout;
pub use tape::{concat, Gradients, Tape, Var};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

use crate::model::MlpParams;

/// Orders of differentiation in x and t.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    pub x: u8,
    pub t: u8,
}

impl MultiIndex {
    pub const VALUE: Self = Self::new(0, 0);
    pub const X: Self = Self::new(1, 0);
    pub const XX: Self = Self::new(2, 0);
    pub const XXX: Self = Self::new(3, 0);
    pub const XXXX: Self = Self::new(4, 0);
    pub const T: Self = Self::new(0, 1);
    pub const XT: Self = Self::new(1, 1);

    pub const fn new(x: u8, t: u8) -> Self {
        Self { x, t }
    }

    pub const fn order(&self) -> u8 {
        self.x + self.t
    }

    /// `x! t!`, the factor turning a normalised Taylor coefficient into a derivative.
    pub fn factorial(&self) -> f64 {
        let f = |n: u8| (1..=n as u32).map(f64::from).product::<f64>();
        f(self.x) * f(self.t)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.order() == 0 {
            return write!(f, "u");
        }
        write!(f, "u_{}{}", "x".repeat(self.x as usize), "t".repeat(self.t as usize))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("derivative {0} exceeds the supported total order 4")]
    UnsupportedOrder(MultiIndex),
    #[error("point has {got} coordinates but the network takes {want}")]
    Dimension { got: usize, want: usize },
}

/// Value and requested partials of every output channel of `net` at `point`.
///
/// `point` is `[x, t]` for space-time networks and `[t]` for time-only networks;
/// x-derivatives of a time-only network are zero.
pub fn eval_with_input_derivs(
    net: &MlpParams,
    point: &[f64],
    orders: &[MultiIndex],
) -> Result<BTreeMap<MultiIndex, Vec<f64>>, AutodiffError> {
    if point.len() != net.input_dim() {
        return Err(AutodiffError::Dimension { got: point.len(), want: net.input_dim() });
    }
    let layout = JetLayout::covering(orders)?;
    let time_only = net.input_dim() == 1;
    let (x, t) = if time_only { (0.0, point[0]) } else { (point[0], point[1]) };
    let out = net.forward(&Tensor::seed_inputs(&[x], &[t], layout.clone(), time_only));
    let mut map = BTreeMap::new();
    for &m in orders.iter().chain(std::iter::once(&MultiIndex::VALUE)) {
        let c = layout.position(m).expect("layout covers every request");
        let vals = (0..out.cols).map(|ch| out.at(0, c, ch) * m.factorial()).collect();
        map.insert(m, vals);
    }
    Ok(map)
}

/// Value and gradient of a scalar loss with respect to each parameter array.
///
/// `loss` receives one tape leaf per entry of `params`, in order.
pub fn grad_params<F>(params: &[Tensor], loss: F) -> (f64, Vec<Tensor>)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let l = loss(&tape, &leaves);
    let value = l.item();
    let grads = tape.backward(l);
    let out = leaves
        .iter()
        .zip(params)
        .map(|(v, p)| Tensor { data: grads.get_or_zeros(*v), ..p.clone() })
        .collect();
    (value, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm, DenseMatrix};

    #[test]
    fn display_names() {
        assert_eq!(MultiIndex::VALUE.to_string(), "u");
        assert_eq!(MultiIndex::XX.to_string(), "u_xx");
        assert_eq!(MultiIndex::XT.to_string(), "u_xt");
    }

    #[test]
    fn expm_propagation_loss_gradient() {
        let a = DenseMatrix::from_rows(&[
            &[0.1, -0.4, 0.2, 0.0],
            &[0.3, 0.0, -0.1, 0.5],
            &[-0.2, 0.1, -0.3, 0.2],
            &[0.0, 0.6, 0.1, -0.2],
        ]);
        let z0 = Tensor::plain(1, 4, vec![1.0, -0.5, 0.3, 2.0]);
        let z1 = Tensor::plain(1, 4, vec![0.8, -0.1, 0.9, 1.5]);
        let dt = 0.4;
        let (_, g) = grad_params(&[Tensor::from_matrix(&a)], |tape, v| {
            let pred = tape.constant(z0.clone()).matmul_t(v[0].expm(dt).unwrap());
            (pred - tape.constant(z1.clone())).mean_row_sq_norm()
        });
        let f = |m: &DenseMatrix| {
            let k = expm(m, dt).unwrap();
            let p = k.matvec(&z0.data);
            p.iter().zip(&z1.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        };
        let h = 1e-6;
        for i in 0..16 {
            let mut ap = a.clone();
            ap.as_mut_slice()[i] += h;
            let mut am = a.clone();
            am.as_mut_slice()[i] -= h;
            let fd = (f(&ap) - f(&am)) / (2.0 * h);
            let got = g[0].data[i];
            assert!((fd - got).abs() <= 1e-5 * fd.abs().max(1e-3), "{i}: {fd} vs {got}");
        }
    }
}
