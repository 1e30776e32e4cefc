use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikelab::autodiff::{eval_with_input_derivs, grad_params, Jet, JetLayout, MultiIndex, Tape, Tensor, Var};
use spikelab::model::{MlpArch, MlpParams};

fn small_net(seed: u64, out: usize) -> MlpParams {
    MlpParams::init(
        MlpArch { input_dim: 2, hidden: vec![12, 12, 12], output_dim: out, activate_output: false },
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

/// Second-order central-difference weights indexed by offset -2..=2.
fn stencil(k: u8) -> [f64; 5] {
    match k {
        0 => [0.0, 0.0, 1.0, 0.0, 0.0],
        1 => [0.0, -0.5, 0.0, 0.5, 0.0],
        2 => [0.0, 1.0, -2.0, 1.0, 0.0],
        3 => [-0.5, 1.0, 0.0, -1.0, 0.5],
        4 => [1.0, -4.0, 6.0, -4.0, 1.0],
        _ => unreachable!(),
    }
}

fn central(net: &MlpParams, x: f64, t: f64, m: MultiIndex, h: f64) -> f64 {
    let (sx, st) = (stencil(m.x), stencil(m.t));
    let mut acc = 0.0;
    for (i, wx) in sx.iter().enumerate() {
        for (j, wt) in st.iter().enumerate() {
            let w = wx * wt;
            if w != 0.0 {
                let xi = x + (i as f64 - 2.0) * h;
                let tj = t + (j as f64 - 2.0) * h;
                acc += w * net.forward_point(&[xi, tj])[0];
            }
        }
    }
    acc / h.powi(m.order() as i32)
}

/// Two Richardson levels on an O(h²) estimate.
fn richardson(net: &MlpParams, x: f64, t: f64, m: MultiIndex) -> f64 {
    let h = 0.08;
    let d: Vec<f64> = (0..3).map(|k| central(net, x, t, m, h / 2f64.powi(k))).collect();
    let r1 = [(4.0 * d[1] - d[0]) / 3.0, (4.0 * d[2] - d[1]) / 3.0];
    (16.0 * r1[1] - r1[0]) / 15.0
}

fn all_indices() -> Vec<MultiIndex> {
    let mut v = Vec::new();
    for d in 0..=4u8 {
        for t in 0..=d {
            v.push(MultiIndex::new(d - t, t));
        }
    }
    v
}

#[test]
fn network_partials_match_richardson_finite_differences() {
    for seed in 0..3 {
        let net = small_net(seed, 1);
        let (x, t) = (0.37, 0.61);
        let idx = all_indices();
        let jets = eval_with_input_derivs(&net, &[x, t], &idx).unwrap();
        for m in idx {
            let exact = jets[&m][0];
            let fd = richardson(&net, x, t, m);
            let rel = (fd - exact).abs() / exact.abs().max(1e-2);
            assert!(rel <= 1e-4, "seed {seed} {m}: jet {exact} fd {fd}");
        }
    }
}

#[test]
fn order_five_is_rejected() {
    let net = small_net(0, 1);
    assert!(eval_with_input_derivs(&net, &[0.0, 0.0], &[MultiIndex::new(5, 0)]).is_err());
}

#[test]
fn polynomial_bypass_x2t() {
    let f = Jet::var_x(1.5) * Jet::var_x(1.5) * Jet::var_t(0.4);
    assert!((f.deriv(MultiIndex::XX) - 0.8).abs() < 1e-15);
    assert!((f.deriv(MultiIndex::T) - 2.25).abs() < 1e-15);
}

#[test]
fn mixed_partials_are_symmetric() {
    // The jet stores one coefficient per multi-index, so symmetry is checked by
    // differentiating in the two possible orders through nested evaluation.
    let net = small_net(4, 1);
    let (x, t, h) = (0.2, 0.5, 1e-5);
    let d = |x: f64, t: f64, m: MultiIndex| eval_with_input_derivs(&net, &[x, t], &[m]).unwrap()[&m][0];
    let xt = (d(x, t + h, MultiIndex::X) - d(x, t - h, MultiIndex::X)) / (2.0 * h);
    let tx = (d(x + h, t, MultiIndex::T) - d(x - h, t, MultiIndex::T)) / (2.0 * h);
    let direct = d(x, t, MultiIndex::XT);
    assert!((xt - direct).abs() < 1e-8 && (tx - direct).abs() < 1e-8);
    assert!((xt - tx).abs() <= 1e-10 + 1e-8 * direct.abs());
}

#[test]
fn residual_loss_gradient_through_input_derivatives() {
    // loss = mean((u_t - 0.1 u_xx + u u_x)²) over a few points.
    let net = small_net(9, 1);
    let layout = JetLayout::covering(&[MultiIndex::XX, MultiIndex::T]).unwrap();
    let xs = [0.1, 0.45, 0.8];
    let ts = [0.2, 0.5, 0.9];
    let input = Tensor::seed_inputs(&xs, &ts, layout.clone(), false);
    let (cx, cxx, ct) = (
        layout.position(MultiIndex::X).unwrap(),
        layout.position(MultiIndex::XX).unwrap(),
        layout.position(MultiIndex::T).unwrap(),
    );
    fn loss<'t>(net: &MlpParams, input: &Tensor, c: (usize, usize, usize), tape: &'t Tape, leaves: &[Var<'t>]) -> Var<'t> {
        let out = net.vars(leaves).forward(tape.constant(input.clone()));
        let u = out.extract(0, 0, 1.0);
        let ux = out.extract(c.0, 0, 1.0);
        let uxx = out.extract(c.1, 0, 2.0);
        let ut = out.extract(c.2, 0, 1.0);
        let r = ut - uxx * 0.1 + u * ux;
        (r * r).mean()
    }
    let params = net.tensors();
    let (_, grads) = grad_params(&params, |tape, leaves| loss(&net, &input, (cx, cxx, ct), tape, leaves));
    let eval = |p: &[Tensor]| {
        let tape = Tape::new();
        let leaves: Vec<Var> = p.iter().map(|t| tape.leaf(t.clone())).collect();
        loss(&net, &input, (cx, cxx, ct), &tape, &leaves).item()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    for _ in 0..20 {
        let a = rand::Rng::random_range(&mut rng, 0..params.len());
        let i = rand::Rng::random_range(&mut rng, 0..params[a].data.len());
        let mut pp = params.clone();
        pp[a].data[i] += h;
        let mut pm = params.clone();
        pm[a].data[i] -= h;
        let fd = (eval(&pp) - eval(&pm)) / (2.0 * h);
        let got = grads[a].data[i];
        assert!((fd - got).abs() <= 1e-4 * fd.abs().max(1e-4), "array {a} entry {i}: {fd} vs {got}");
    }
}

fn arb_poly() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 15)
}

/// A polynomial of degree ≤ 4 in (x, t), coefficients on the graded basis.
fn poly_jet(c: &[f64], x0: f64, t0: f64) -> Jet {
    let x = Jet::var_x(x0);
    let t = Jet::var_t(t0);
    let mut acc = Jet::constant(0.0);
    let mut k = 0;
    for d in 0..=4 {
        for b in 0..=d {
            acc = acc + x.powi(d - b) * t.powi(b) * c[k as usize];
            k += 1;
        }
    }
    acc
}

fn binom(n: u8, k: u8) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

proptest! {
    #[test]
    fn leibniz_rule(p in arb_poly(), q in arb_poly(), x0 in -1.0f64..1.0, t0 in -1.0f64..1.0) {
        let (fp, fq) = (poly_jet(&p, x0, t0), poly_jet(&q, x0, t0));
        let prod = fp * fq;
        for m in all_indices() {
            let mut expect = 0.0;
            for a in 0..=m.x {
                for b in 0..=m.t {
                    expect += binom(m.x, a) * binom(m.t, b)
                        * fp.deriv(MultiIndex::new(a, b))
                        * fq.deriv(MultiIndex::new(m.x - a, m.t - b));
                }
            }
            let got = prod.deriv(m);
            prop_assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1.0), "{m}: {got} vs {expect}");
        }
    }
}
