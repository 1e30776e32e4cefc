use std::cell::{Ref, RefCell};
use std::ops::{Add, Mul, Neg, Sub};

use super::{kernels, Tensor};
use crate::linalg::{self, DenseMatrix, LinalgError};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: usize, w: usize, b: usize },
    Tanh(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddConst(usize),
    Extract { a: usize, coef: usize, col: usize, factor: f64 },
    Concat(Vec<usize>),
    MatMulT { z: usize, a: usize },
    Expm { a: usize, dt: f64 },
    Mean(usize),
    MeanRowSqNorm(usize),
    AbsSum(usize),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Records tensor operations for one reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a recorded tensor.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient data, or zeros of the right length when `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.data.clone(),
            None => vec![0.0; v.value().data.len()],
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Tensor) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// A differentiable input (parameter array or data).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value)
    }

    pub fn leaf_matrix(&self, m: &DenseMatrix) -> Var<'_> {
        self.leaf(Tensor::from_matrix(m))
    }

    /// A plain `1 × n` row.
    pub fn leaf_row(&self, v: &[f64]) -> Var<'_> {
        self.leaf(Tensor::plain(1, v.len(), v.to_vec()))
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value)
    }

    fn unary<F: FnOnce(&Tensor) -> Tensor>(&self, a: usize, op: Op, f: F) -> Var<'_> {
        let value = f(&self.nodes.borrow()[a].value);
        self.push(op, value)
    }

    fn binary<F: FnOnce(&Tensor, &Tensor) -> Tensor>(&self, a: usize, b: usize, op: Op, f: F) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a].value, &nodes[b].value)
        };
        self.push(op, value)
    }

    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.id].value.data.len(), 1, "loss must be a scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor { data: vec![1.0], ..nodes[loss.id].value.clone() });

        fn acc(grads: &mut [Option<Tensor>], id: usize, like: &Tensor, f: impl FnOnce(&mut [f64])) {
            let g = grads[id].get_or_insert_with(|| Tensor { data: vec![0.0; like.data.len()], ..like.clone() });
            f(&mut g.data);
        }

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Affine { x, w, b } => {
                    let wv = val(*w);
                    let (xbar, wbar, bbar) = kernels::affine_backward(val(*x), &wv.data, &g, true);
                    let xbar = xbar.expect("requested");
                    acc(&mut grads, *x, val(*x), |d| add_into(d, &xbar.data));
                    acc(&mut grads, *w, wv, |d| add_into(d, &wbar));
                    acc(&mut grads, *b, val(*b), |d| add_into(d, &bbar));
                }
                Op::Tanh(a) => {
                    let abar = kernels::tanh_backward(&node.value, &g);
                    acc(&mut grads, *a, val(*a), |d| add_into(d, &abar.data));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, val(*a), |d| add_into(d, &g.data));
                    acc(&mut grads, *b, val(*b), |d| add_into(d, &g.data));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, val(*a), |d| add_into(d, &g.data));
                    acc(&mut grads, *b, val(*b), |d| d.iter_mut().zip(&g.data).for_each(|(o, v)| *o -= v));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    acc(&mut grads, *a, av, |d| {
                        for ((o, gv), y) in d.iter_mut().zip(&g.data).zip(&bv.data) {
                            *o += gv * y;
                        }
                    });
                    acc(&mut grads, *b, bv, |d| {
                        for ((o, gv), x) in d.iter_mut().zip(&g.data).zip(&av.data) {
                            *o += gv * x;
                        }
                    });
                }
                Op::Neg(a) => {
                    acc(&mut grads, *a, val(*a), |d| d.iter_mut().zip(&g.data).for_each(|(o, v)| *o -= v));
                }
                Op::Scale(a, c) => {
                    acc(&mut grads, *a, val(*a), |d| d.iter_mut().zip(&g.data).for_each(|(o, v)| *o += c * v));
                }
                Op::AddConst(a) => {
                    acc(&mut grads, *a, val(*a), |d| add_into(d, &g.data));
                }
                Op::Extract { a, coef, col, factor } => {
                    let av = val(*a);
                    let (nc, cols) = (av.ncoef(), av.cols);
                    acc(&mut grads, *a, av, |d| {
                        for p in 0..av.npts {
                            d[(p * nc + coef) * cols + col] += factor * g.data[p];
                        }
                    });
                }
                Op::Concat(parts) => {
                    let total = node.value.cols;
                    let mut off = 0;
                    for &pid in parts {
                        let pv = val(pid);
                        let w = pv.cols;
                        acc(&mut grads, pid, pv, |d| {
                            for r in 0..pv.rows() {
                                for c in 0..w {
                                    d[r * w + c] += g.data[r * total + off + c];
                                }
                            }
                        });
                        off += w;
                    }
                }
                Op::MatMulT { z, a } => {
                    let (zv, av) = (val(*z), val(*a));
                    let (n, m, k) = (zv.rows(), zv.cols, av.rows());
                    acc(&mut grads, *z, zv, |d| {
                        linalg::gemm_raw(n, k, m, 1.0, &g.data, false, k, &av.data, false, m, 1.0, d);
                    });
                    acc(&mut grads, *a, av, |d| {
                        linalg::gemm_raw(k, n, m, 1.0, &g.data, true, k, &zv.data, false, m, 1.0, d);
                    });
                }
                Op::Expm { a, dt } => {
                    let av = val(*a);
                    let am = av.to_matrix();
                    let up = g.to_matrix();
                    let ga = linalg::expm_with_grad(&am, *dt, &up).expect("forward pass already succeeded");
                    acc(&mut grads, *a, av, |d| add_into(d, ga.as_slice()));
                }
                Op::Mean(a) => {
                    let av = val(*a);
                    let s = g.data[0] / av.data.len() as f64;
                    acc(&mut grads, *a, av, |d| d.iter_mut().for_each(|o| *o += s));
                }
                Op::MeanRowSqNorm(a) => {
                    let av = val(*a);
                    let s = 2.0 * g.data[0] / av.rows() as f64;
                    acc(&mut grads, *a, av, |d| d.iter_mut().zip(&av.data).for_each(|(o, x)| *o += s * x));
                }
                Op::AbsSum(a) => {
                    let av = val(*a);
                    let s = g.data[0];
                    acc(&mut grads, *a, av, |d| {
                        for (o, x) in d.iter_mut().zip(&av.data) {
                            if *x > 0.0 {
                                *o += s;
                            } else if *x < 0.0 {
                                *o -= s;
                            }
                        }
                    });
                }
            }
        }
        Gradients { grads }
    }
}

fn add_into(d: &mut [f64], s: &[f64]) {
    for (o, v) in d.iter_mut().zip(s) {
        *o += v;
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert!(a.same_shape(b), "shape mismatch: {}x{} vs {}x{}", a.rows(), a.cols, b.rows(), b.cols);
    Tensor { data: a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect(), ..a.clone() }
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor { data: a.data.iter().map(|x| f(*x)).collect(), ..a.clone() }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    /// Scalar value; panics if not `1 × 1`.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    /// `self Wᵀ + b` with `w: out × in` and `b: 1 × out`.
    pub fn affine(self, w: Var<'t>, b: Var<'t>) -> Var<'t> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (wv, bv) = (&nodes[w.id].value, &nodes[b.id].value);
            kernels::affine_forward(&nodes[self.id].value, &wv.data, &bv.data, wv.rows())
        };
        self.tape.push(Op::Affine { x: self.id, w: w.id, b: b.id }, value)
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Tanh(self.id), kernels::tanh_forward)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::Scale(self.id, c), |a| map(a, |x| c * x))
    }

    /// Adds `c` to the value coefficient of every entry.
    pub fn add_const(self, c: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::AddConst(self.id), |a| {
            let mut out = a.clone();
            let (nc, cols) = (a.ncoef(), a.cols);
            for p in 0..a.npts {
                for v in out.data[p * nc * cols..p * nc * cols + cols].iter_mut() {
                    *v += c;
                }
            }
            out
        })
    }

    /// Column `col` of coefficient `coef`, multiplied by `factor`, as a plain `npts × 1` tensor.
    pub fn extract(self, coef: usize, col: usize, factor: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::Extract { a: self.id, coef, col, factor }, |a| {
            let data = (0..a.npts).map(|p| factor * a.at(p, coef, col)).collect();
            Tensor::plain(a.npts, 1, data)
        })
    }

    /// Value coefficient of column `col`.
    pub fn column(self, col: usize) -> Var<'t> {
        self.extract(0, col, 1.0)
    }

    /// `self Aᵀ` for plain tensors.
    pub fn matmul_t(self, a: Var<'t>) -> Var<'t> {
        self.tape.binary(self.id, a.id, Op::MatMulT { z: self.id, a: a.id }, |z, a| {
            assert!(z.is_plain() && a.is_plain());
            let (n, m, k) = (z.rows(), z.cols, a.rows());
            assert_eq!(a.cols, m);
            let mut out = Tensor::plain(n, k, vec![0.0; n * k]);
            linalg::gemm_raw(n, m, k, 1.0, &z.data, false, m, &a.data, true, m, 0.0, &mut out.data);
            out
        })
    }

    /// `e^{A dt}` of a square plain tensor.
    pub fn expm(self, dt: f64) -> Result<Var<'t>, LinalgError> {
        let k = linalg::expm(&self.value().to_matrix(), dt)?;
        Ok(self.tape.push(Op::Expm { a: self.id, dt }, Tensor::from_matrix(&k)))
    }

    pub fn mean(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Mean(self.id), |a| {
            Tensor::scalar(a.data.iter().sum::<f64>() / a.data.len() as f64)
        })
    }

    /// Mean over rows of the squared Euclidean row norm.
    pub fn mean_row_sq_norm(self) -> Var<'t> {
        self.tape.unary(self.id, Op::MeanRowSqNorm(self.id), |a| {
            Tensor::scalar(a.data.iter().map(|x| x * x).sum::<f64>() / a.rows() as f64)
        })
    }

    /// `Σ |a_ij|`; the subgradient at 0 is 0.
    pub fn abs_sum(self) -> Var<'t> {
        self.tape.unary(self.id, Op::AbsSum(self.id), |a| Tensor::scalar(a.data.iter().map(|x| x.abs()).sum()))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }
}

/// Concatenates plain tensors with equal row counts along columns.
pub fn concat<'t>(parts: &[Var<'t>]) -> Var<'t> {
    let tape = parts[0].tape;
    let value = {
        let nodes = tape.nodes.borrow();
        let rows = nodes[parts[0].id].value.rows();
        let total: usize = parts.iter().map(|p| nodes[p.id].value.cols).sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for p in parts {
            let v = &nodes[p.id].value;
            assert!(v.is_plain() && v.rows() == rows, "concat needs plain tensors with equal rows");
            for r in 0..rows {
                data[r * total + off..r * total + off + v.cols].copy_from_slice(&v.data[r * v.cols..(r + 1) * v.cols]);
            }
            off += v.cols;
        }
        Tensor::plain(rows, total, data)
    };
    tape.push(Op::Concat(parts.iter().map(|p| p.id).collect()), value)
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary(self.id, rhs.id, Op::Add(self.id, rhs.id), |a, b| zip_map(a, b, |x, y| x + y))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary(self.id, rhs.id, Op::Sub(self.id, rhs.id), |a, b| zip_map(a, b, |x, y| x - y))
    }
}

/// Entrywise product; both operands must be plain.
impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary(self.id, rhs.id, Op::Mul(self.id, rhs.id), |a, b| {
            assert!(a.is_plain(), "entrywise product of jet tensors is not supported");
            zip_map(a, b, |x, y| x * y)
        })
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Neg(self.id), |a| map(a, |x| -x))
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.scale(c)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.add_const(c)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.add_const(-c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm_has_gradient_theta() {
        let tape = Tape::new();
        let theta = tape.leaf(Tensor::plain(1, 3, vec![1.5, -2.0, 0.25]));
        let loss = (theta * theta).mean().scale(1.5);
        let g = tape.backward(loss);
        assert_eq!(g.get(theta).unwrap().data, vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn abs_sum_subgradient() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::plain(2, 2, vec![0.5, -0.25, 0.0, 3.0]));
        let g = tape.backward(a.abs_sum());
        assert_eq!(g.get(a).unwrap().data, vec![1.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_loss_has_no_gradient() {
        let tape = Tape::new();
        let p = tape.leaf(Tensor::scalar(2.0));
        let c = tape.constant(Tensor::scalar(3.0));
        let g = tape.backward(c.mean());
        assert!(g.get(p).is_none());
        assert_eq!(g.get_or_zeros(p), vec![0.0]);
    }

    #[test]
    fn matmul_t_and_concat_gradients() {
        let tape = Tape::new();
        let z = tape.leaf(Tensor::plain(2, 2, vec![1.0, 2.0, -1.0, 0.5]));
        let a = tape.leaf(Tensor::plain(2, 2, vec![0.3, -0.7, 1.1, 0.2]));
        let y = concat(&[z.matmul_t(a), z]);
        let loss = y.mean_row_sq_norm();
        let g = tape.backward(loss);
        let f = |zd: &[f64], ad: &[f64]| {
            let mut s = 0.0;
            for r in 0..2 {
                for k in 0..2 {
                    let v = zd[r * 2] * ad[k * 2] + zd[r * 2 + 1] * ad[k * 2 + 1];
                    s += v * v;
                }
                s += zd[r * 2] * zd[r * 2] + zd[r * 2 + 1] * zd[r * 2 + 1];
            }
            s / 2.0
        };
        let zd = vec![1.0, 2.0, -1.0, 0.5];
        let ad = vec![0.3, -0.7, 1.1, 0.2];
        let h = 1e-6;
        for i in 0..4 {
            let mut zp = zd.clone();
            zp[i] += h;
            let mut zm = zd.clone();
            zm[i] -= h;
            let fd = (f(&zp, &ad) - f(&zm, &ad)) / (2.0 * h);
            assert!((fd - g.get(z).unwrap().data[i]).abs() < 1e-8);
            let mut ap = ad.clone();
            ap[i] += h;
            let mut am = ad.clone();
            am[i] -= h;
            let fd = (f(&zd, &ap) - f(&zd, &am)) / (2.0 * h);
            assert!((fd - g.get(a).unwrap().data[i]).abs() < 1e-8);
        }
    }
}
