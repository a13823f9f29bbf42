//! Weak-form residual of a grid solution against smooth compactly supported
//! test functions.

use serde::{Deserialize, Serialize};

use super::grid::GridFunction;
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

/// `η(x) = exp(-1 / (1 - |x - c|² / r²))` inside the ball, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TestFunction {
    pub fn bump(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let r2 = self.radius * self.radius;
        let s: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / r2;
        if s >= 1.0 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return 0.0;
        }
        let v = (-1.0 / (1.0 - s)).exp();
        for (i, g) in grad.iter_mut().enumerate() {
            *g = v * (-2.0 * (x[i] - self.center[i]) / r2) / ((1.0 - s) * (1.0 - s));
        }
        v
    }
}

/// A few bumps spread over the inner half of the box.
pub fn default_test_functions(spec: &ProblemSpec) -> Vec<TestFunction> {
    let r = spec.domain.radius;
    let offsets = [-0.4, 0.0, 0.4];
    let mut out = Vec::new();
    if spec.dim == 1 {
        for o in offsets {
            out.push(TestFunction::bump(vec![o * r], 0.25 * r));
        }
    } else {
        for o in offsets {
            for p in offsets {
                out.push(TestFunction::bump(vec![o * r, p * r], 0.25 * r));
            }
        }
    }
    out
}

struct Sampled {
    nodes: Vec<usize>,
    eta: Vec<f64>,
    grad: Vec<f64>,
    norm: f64,
}

fn sample(u: &GridFunction, eta: &TestFunction) -> Result<Sampled> {
    let g = &u.space;
    let d = g.dim;
    if eta.center.len() != d || !(eta.radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "test function {eta:?} does not fit a {d}-d grid"
        )));
    }
    for a in 0..d {
        let lo = g.lo[a] + g.h[a];
        let hi = g.lo[a] + (g.n[a] - 2) as f64 * g.h[a];
        if eta.center[a] - eta.radius <= lo || eta.center[a] + eta.radius >= hi {
            return Err(Error::InvalidInput(format!(
                "test function support {:?} ± {} touches the boundary of the box",
                eta.center, eta.radius
            )));
        }
    }
    let mut nodes = Vec::new();
    let mut vals = Vec::new();
    let mut grads = Vec::new();
    let mut gr = vec![0.0; d];
    let mut norm = 0.0;
    for idx in 0..g.len() {
        let x = g.point(idx);
        let v = eta.eval(&x, &mut gr);
        if v != 0.0 {
            nodes.push(idx);
            vals.push(v);
            grads.extend_from_slice(&gr);
            norm += g.weight(idx) * v * v;
        }
    }
    Ok(Sampled {
        nodes,
        eta: vals,
        grad: grads,
        norm: norm.sqrt(),
    })
}

/// Largest `|⟨u(t_k), η⟩ − ⟨φ, η⟩ − Δt Σ_{j>k} ⟨𝓛u + 𝓜q + ν·q̂ + f, η⟩(t_j)|`
/// over `η` and `k`, normalized by `‖η‖ · max_k ‖u(t_k)‖`. The
/// second-order term is integrated by parts:
/// `⟨a^{ij} u_ij, η⟩ = −⟨a^{ij} u_i, η_j⟩ − ⟨a^{ij}_j u_i, η⟩`. The viscosity
/// `ε` recorded on `u` is added to `a`.
pub fn weak_residual(
    u: &GridFunction,
    q: Option<&GridFunction>,
    spec: &ProblemSpec,
    tests: &[TestFunction],
) -> Result<f64> {
    let g = &u.space;
    let (d, dp) = (g.dim, spec.noise_dim);
    if d != spec.dim {
        return Err(Error::InvalidInput(format!(
            "grid is {d}-d but the spec is {}-d",
            spec.dim
        )));
    }
    if let Some(q) = q {
        if q.components != dp || q.space != u.space || q.time != u.time {
            return Err(Error::InvalidInput(
                "q must live on the grid of u with d' components".into(),
            ));
        }
    }
    if tests.is_empty() {
        return Err(Error::InvalidInput("no test functions".into()));
    }
    let sampled: Vec<Sampled> = tests.iter().map(|e| sample(u, e)).collect::<Result<_>>()?;
    let nt = u.n_times();
    let dt = u.time.dt();
    let unorm = (0..nt)
        .map(|k| {
            u.component(k, 0)
                .iter()
                .enumerate()
                .map(|(i, v)| g.weight(i) * v * v)
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let eps = u.meta.epsilon;
    let mut worst = 0.0f64;
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let mut sn = vec![0.0; d];
    let mut sig = vec![0.0; d * dp];
    let mut nu = vec![0.0; dp];
    let mut qhat = vec![0.0; dp];
    let t_end = u.time.node(u.time.n_steps);
    for s in &sampled {
        let mut integrands = vec![0.0; nt];
        let mut pairings = vec![0.0; nt];
        let mut phi_pair = 0.0;
        for (n, &idx) in s.nodes.iter().enumerate() {
            let x = g.point(idx);
            phi_pair += g.weight(idx) * spec.terminal.eval(t_end, &x, 0.0) * s.eta[n];
        }
        for k in 0..nt {
            let t = u.time.node(k);
            let uk = u.component(k, 0);
            let qk: Vec<Vec<f64>> = q.map_or_else(Vec::new, |q| (0..dp).map(|c| q.component(k, c)).collect());
            let (mut acc, mut pair) = (0.0, 0.0);
            for (n, &idx) in s.nodes.iter().enumerate() {
                let x = g.point(idx);
                let w = g.weight(idx);
                let eta = s.eta[n];
                let eg = &s.grad[n * d..(n + 1) * d];
                let ux: Vec<f64> = (0..d).map(|i| g.diff1(&uk, idx, i)).collect();
                spec.a.eval_into(t, &x, 0.0, &mut a);
                spec.b.eval_into(t, &x, 0.0, &mut b);
                spec.sigma_nu(t, &x, &mut sn);
                spec.sigma.eval_into(t, &x, 0.0, &mut sig);
                spec.nu.eval_into(t, &x, 0.0, &mut nu);
                let c = spec.c.eval_scalar(t, &x, 0.0);
                let mut v = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        let aij = a[i * d + j] + if i == j { eps } else { 0.0 };
                        let mut gamma = [0usize; 2];
                        gamma[j] = 1;
                        let daij = spec.a.components()[i * d + j].deriv(t, &x, 0.0, &gamma[..d]);
                        v -= aij * ux[i] * eg[j] + daij * ux[i] * eta;
                    }
                    v += (b[i] + sn[i]) * ux[i] * eta;
                }
                v += c * uk[idx] * eta;
                for j in 0..dp {
                    qhat[j] = (0..d).map(|i| ux[i] * sig[i * dp + j]).sum::<f64>();
                }
                if q.is_some() {
                    for kk in 0..dp {
                        let qv = qk[kk][idx];
                        qhat[kk] += qv;
                        v += nu[kk] * qv * eta;
                        for i in 0..d {
                            v += sig[i * dp + kk] * g.diff1(&qk[kk], idx, i) * eta;
                        }
                    }
                }
                v += spec.driver.eval(t, &x, 0.0, uk[idx], &qhat) * eta;
                acc += w * v;
                pair += w * uk[idx] * eta;
            }
            integrands[k] = acc;
            pairings[k] = pair;
        }
        let mut tail = 0.0;
        for k in (0..nt).rev() {
            let r = pairings[k] - phi_pair - dt * tail;
            let scale = s.norm * unorm;
            worst = worst.max(if scale > 0.0 { r.abs() / scale } else { r.abs() });
            tail += integrands[k];
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_gradient_matches_differences() {
        let e = TestFunction::bump(vec![0.1, -0.2], 0.7);
        let x = [0.3, 0.1];
        let mut g = [0.0; 2];
        e.eval(&x, &mut g);
        let h = 1e-6;
        let mut tmp = [0.0; 2];
        let fd = (e.eval(&[x[0] + h, x[1]], &mut tmp) - e.eval(&[x[0] - h, x[1]], &mut tmp)) / (2.0 * h);
        assert!((fd - g[0]).abs() < 1e-7);
        assert_eq!(e.eval(&[5.0, 5.0], &mut tmp), 0.0);
    }
}
