use super::{ReferenceError, ReferenceField};
use crate::systems::{SystemId, SystemSpec};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[0.2],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth minus embedded fourth order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];
const MAX_STEPS: usize = 10_000_000;

/// Dormand-Prince 5(4) with mixed absolute/relative tolerance `tol`; output
/// times are hit exactly by shortening the step.
pub fn dopri5(
    f: impl Fn(f64, &[f64], &mut [f64]),
    y0: &[f64],
    ts: &[f64],
    tol: f64,
) -> Result<Vec<Vec<f64>>, ReferenceError> {
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    f(t, &y, &mut k[0]);
    let mut h: f64 = 1e-3;
    let mut out = Vec::with_capacity(ts.len());
    let mut stage = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut steps = 0;
    for &target in ts {
        while target - t > 1e-14 * target.abs().max(1.0) {
            steps += 1;
            if steps > MAX_STEPS || !h.is_finite() || h < 1e-14 {
                return Err(ReferenceError::Diverged { t });
            }
            let last = h >= target - t;
            let step = if last { target - t } else { h };
            for s in 1..7 {
                let (prev, rest) = k.split_at_mut(s);
                for i in 0..n {
                    stage[i] = y[i] + step * A[s].iter().zip(prev.iter()).map(|(a, kj)| a * kj[i]).sum::<f64>();
                }
                f(t + C[s] * step, &stage, &mut rest[0]);
            }
            // Stage 7 was evaluated at the fifth-order solution.
            ynew.copy_from_slice(&stage);
            let mut err = 0.0;
            for i in 0..n {
                let e = step * E.iter().enumerate().map(|(j, w)| w * k[j][i]).sum::<f64>();
                let sc = tol + tol * y[i].abs().max(ynew[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y.copy_from_slice(&ynew);
                k.swap(0, 6);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last || err > 1.0 {
                h = step * factor;
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

pub fn vector_field(spec: &SystemSpec) -> Option<Box<dyn Fn(f64, &[f64], &mut [f64]) + '_>> {
    match spec.id {
        SystemId::Lorenz => {
            let (s, r, b) = (spec.coef("sigma"), spec.coef("rho"), spec.coef("beta"));
            Some(Box::new(move |_, y: &[f64], d: &mut [f64]| {
                d[0] = s * (y[1] - y[0]);
                d[1] = y[0] * (r - y[2]) - y[1];
                d[2] = y[0] * y[1] - b * y[2];
            }))
        }
        SystemId::Seir => {
            let (beta, sigma, gamma, n) = (spec.coef("beta"), spec.coef("sigma"), spec.coef("gamma"), spec.coef("N"));
            Some(Box::new(move |_, y: &[f64], d: &mut [f64]| {
                let inf = beta * y[0] * y[2] / n;
                d[0] = -inf;
                d[1] = inf - sigma * y[1];
                d[2] = sigma * y[1] - gamma * y[2];
                d[3] = gamma * y[2];
            }))
        }
        _ => None,
    }
}

/// Adaptive reference trajectory of a time-only system on the times `ts`.
pub fn solve_ode_adaptive(spec: &SystemSpec, ts: &[f64], tol: f64) -> Result<ReferenceField, ReferenceError> {
    solve_ode_adaptive_from(spec, &spec.x0, ts, tol)
}

pub fn solve_ode_adaptive_from(
    spec: &SystemSpec,
    x0: &[f64],
    ts: &[f64],
    tol: f64,
) -> Result<ReferenceField, ReferenceError> {
    let f = vector_field(spec).ok_or(ReferenceError::Unsupported { system: spec.id, solver: "dopri5" })?;
    let traj = dopri5(f, x0, ts, tol)?;
    let values = traj.into_iter().flatten().collect();
    Ok(ReferenceField::new(spec.id, &[0.0], ts, spec.state_dim, values, "dopri5"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let ts = [0.5, 1.0, 2.0];
        let y = dopri5(|_, y, d| d[0] = -y[0], &[1.0], &ts, 1e-10).unwrap();
        for (t, v) in ts.iter().zip(&y) {
            assert!((v[0] - (-t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn lorenz_origin_is_fixed() {
        let spec = SystemSpec::new(SystemId::Lorenz);
        let r = solve_ode_adaptive_from(&spec, &[0.0; 3], &[1.0, 5.0], 1e-10).unwrap();
        assert!(r.values.iter().all(|v| *v == 0.0));
    }
}
