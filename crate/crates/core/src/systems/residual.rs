use crate::autodiff::{Field, Jet, MultiIndex, Samples, Tensor, Var};

use super::{SystemId, SystemSpec};

/// Value and partials of each output channel, in any [`Field`] representation.
#[derive(Clone, Debug)]
pub struct DerivFields<T> {
    indices: Vec<MultiIndex>,
    /// `data[ch][k]` holds partial `indices[k]` of channel `ch`.
    data: Vec<Vec<T>>,
}

impl<T: Clone> DerivFields<T> {
    pub fn new(indices: Vec<MultiIndex>, data: Vec<Vec<T>>) -> Self {
        assert!(data.iter().all(|c| c.len() == indices.len()), "one entry per multi-index");
        Self { indices, data }
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, ch: usize, m: MultiIndex) -> T {
        let k = self.indices.iter().position(|&i| i == m).unwrap_or_else(|| panic!("{m} was not evaluated"));
        self.data[ch][k].clone()
    }
}

fn with_value(wanted: &[MultiIndex]) -> Vec<MultiIndex> {
    let mut v = vec![MultiIndex::VALUE];
    v.extend(wanted.iter().copied().filter(|m| *m != MultiIndex::VALUE));
    v
}

/// Partials of a taped network output (`npts × ncoef × channels`).
pub fn fields_from_var<'t>(out: Var<'t>, wanted: &[MultiIndex]) -> DerivFields<Var<'t>> {
    let (layout, cols) = {
        let v = out.value();
        (v.layout.clone(), v.cols)
    };
    let indices = with_value(wanted);
    let data = (0..cols)
        .map(|ch| {
            indices
                .iter()
                .map(|&m| out.extract(layout.position(m).expect("layout covers request"), ch, m.factorial()))
                .collect()
        })
        .collect();
    DerivFields::new(indices, data)
}

/// Partials of a tape-free network output.
pub fn fields_from_tensor(out: &Tensor, wanted: &[MultiIndex]) -> DerivFields<Samples> {
    let indices = with_value(wanted);
    let data = (0..out.cols)
        .map(|ch| {
            indices
                .iter()
                .map(|&m| {
                    let c = out.layout.position(m).expect("layout covers request");
                    let f = m.factorial();
                    Samples((0..out.npts).map(|p| out.at(p, c, ch) * f).collect())
                })
                .collect()
        })
        .collect();
    DerivFields::new(indices, data)
}

/// Residual components at one point of a field given as jets, one per channel.
pub fn residual_at(spec: &SystemSpec, u: &[Jet]) -> Vec<f64> {
    let indices = with_value(&spec.derivatives());
    let data = u.iter().map(|j| indices.iter().map(|&m| j.deriv(m)).collect()).collect();
    residual(spec, &DerivFields::new(indices, data))
}

/// `N[u]`, one component per equation; zero for an exact solution.
pub fn residual<T: Field>(spec: &SystemSpec, d: &DerivFields<T>) -> Vec<T> {
    use MultiIndex as M;
    let u = |m| d.get(0, m);
    match spec.id {
        SystemId::Heat => vec![u(M::T) - u(M::XX) * spec.coef("alpha")],
        SystemId::Advection => vec![u(M::T) + u(M::X) * spec.coef("c")],
        SystemId::Burgers => vec![u(M::T) + u(M::VALUE) * u(M::X) - u(M::XX) * spec.coef("nu")],
        SystemId::AllenCahn => {
            let v = u(M::VALUE);
            vec![u(M::T) - u(M::XX) * spec.coef("epsilon") - v.clone() + v.clone() * v.clone() * v]
        }
        SystemId::Kdv => vec![u(M::T) + u(M::VALUE) * u(M::X) + u(M::XXX)],
        SystemId::ReactionDiffusion => {
            let v = u(M::VALUE);
            vec![u(M::T) - u(M::XX) * spec.coef("D") - v.clone() + v.clone() * v]
        }
        SystemId::CahnHilliard => {
            // (u³ - u)_xx = 6 u u_x² + (3u² - 1) u_xx
            let e = spec.coef("epsilon");
            let (v, vx, vxx) = (u(M::VALUE), u(M::X), u(M::XX));
            let chem = v.clone() * vx.clone() * vx * 6.0 + (v.clone() * v * 3.0 - 1.0) * vxx;
            vec![u(M::T) + u(M::XXXX) * (e * e) - chem]
        }
        SystemId::KuramotoSivashinsky => vec![u(M::T) + u(M::VALUE) * u(M::X) + u(M::XX) + u(M::XXXX)],
        SystemId::Schrodinger => {
            // u = p + iq:  -q_t + p_xx + |u|² p  and  p_t + q_xx + |u|² q
            let p = |m| d.get(0, m);
            let q = |m| d.get(1, m);
            let m2 = p(M::VALUE) * p(M::VALUE) + q(M::VALUE) * q(M::VALUE);
            vec![
                -q(M::T) + p(M::XX) + m2.clone() * p(M::VALUE),
                p(M::T) + q(M::XX) + m2 * q(M::VALUE),
            ]
        }
        SystemId::Lorenz => {
            let (s, r, b) = (spec.coef("sigma"), spec.coef("rho"), spec.coef("beta"));
            let x = |m| d.get(0, m);
            let y = |m| d.get(1, m);
            let z = |m| d.get(2, m);
            vec![
                x(M::T) - (y(M::VALUE) - x(M::VALUE)) * s,
                y(M::T) - x(M::VALUE) * (-z(M::VALUE) + r) + y(M::VALUE),
                z(M::T) - x(M::VALUE) * y(M::VALUE) + z(M::VALUE) * b,
            ]
        }
        SystemId::Seir => {
            let (beta, sigma, gamma, n) = (spec.coef("beta"), spec.coef("sigma"), spec.coef("gamma"), spec.coef("N"));
            let c = |ch: usize, m| d.get(ch, m);
            let infection = c(0, M::VALUE) * c(2, M::VALUE) * (beta / n);
            vec![
                c(0, M::T) + infection.clone(),
                c(1, M::T) - infection + c(1, M::VALUE) * sigma,
                c(2, M::T) - c(1, M::VALUE) * sigma + c(2, M::VALUE) * gamma,
                c(3, M::T) - c(2, M::VALUE) * gamma,
            ]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::exact;

    #[test]
    fn heat_exact_solution_has_zero_residual() {
        let spec = SystemSpec::new(SystemId::Heat);
        for &(x, t) in &[(0.1, 0.0), (0.5, 0.5), (0.83, 0.97)] {
            let u = exact::surrogate(&spec, Jet::var_x(x), Jet::var_t(t)).unwrap();
            let r = residual_at(&spec, &u);
            assert!(r[0].abs() <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn constant_solves_advection() {
        let spec = SystemSpec::new(SystemId::Advection);
        let r = residual_at(&spec, &[Jet::constant(0.7)]);
        assert_eq!(r, vec![0.0]);
    }

    #[test]
    fn lorenz_origin_is_fixed() {
        let spec = SystemSpec::new(SystemId::Lorenz);
        let zero = [Jet::constant(0.0); 3];
        assert_eq!(residual_at(&spec, &zero), vec![0.0; 3]);
    }

    #[test]
    fn seir_residual_of_a_constant_state_is_the_vector_field() {
        let spec = SystemSpec::new(SystemId::Seir);
        let s = [0.9, 0.05, 0.03, 0.02].map(Jet::constant);
        let r = residual_at(&spec, &s);
        let inf = 0.4 * 0.9 * 0.03;
        let want = [inf, -(inf - 0.2 * 0.05), -(0.2 * 0.05 - 0.1 * 0.03), -0.1 * 0.03];
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
