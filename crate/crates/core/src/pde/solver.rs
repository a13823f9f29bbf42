//! Backward time marching and Picard iteration for the semilinear problem.

use serde::{Deserialize, Serialize};

use super::grid::{GridFunction, GridMeta, SpaceGrid};
use super::operator::{extrapolate_boundary, ImplicitStep};
use crate::analysis::picard::{ratios, IterateLog};
use crate::bsde::PicardConfig;
use crate::error::{Error, Result};
use crate::paths::TimeGrid;
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    /// Target spacing; the grid uses the nearest spacing that divides `2R`.
    pub h: f64,
    pub n_steps: usize,
    /// Artificial viscosity `ε`, added as `ε Δu`.
    pub epsilon: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            h: 0.05,
            n_steps: 200,
            epsilon: 0.0,
        }
    }
}

impl PdeConfig {
    pub fn grids(&self, spec: &ProblemSpec) -> Result<(SpaceGrid, TimeGrid)> {
        Ok((
            SpaceGrid::uniform(&spec.domain, self.h)?,
            TimeGrid::new(0.0, spec.horizon, self.n_steps)?,
        ))
    }
}

/// Solution plus the Picard record.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub u: GridFunction,
    pub iterations: usize,
    pub picard: IterateLog,
}

fn check_supported(spec: &ProblemSpec) -> Result<()> {
    if !spec.is_deterministic() {
        return Err(Error::Capability(format!(
            "'{}' has path-dependent data; the grid solver only handles deterministic coefficients",
            spec.name
        )));
    }
    if spec.dim > 2 {
        return Err(Error::Capability(format!(
            "grid solver supports d <= 2, got d = {}",
            spec.dim
        )));
    }
    Ok(())
}

/// Marches `u^k` from `u^N = φ` down to `k = 0` with the implicit step
/// `(I - Δt L_k) u^k = u^{k+1} + Δt S_k`.
fn march<S>(spec: &ProblemSpec, cfg: &PdeConfig, source: S) -> Result<GridFunction>
where
    S: Fn(usize, usize, &[f64]) -> f64,
{
    let (grid, time) = cfg.grids(spec)?;
    let mut u = GridFunction::zeros(grid, time, 1);
    u.meta = GridMeta {
        spec: spec.name.clone(),
        epsilon: cfg.epsilon,
        solver: "implicit-upwind".into(),
    };
    let t_end = time.node(time.n_steps);
    for (idx, v) in u.slice_mut(time.n_steps).iter_mut().enumerate() {
        let x = grid.point(idx);
        *v = spec.terminal.eval(t_end, &x, 0.0);
    }
    let dt = time.dt();
    let mut rhs = vec![0.0; grid.len()];
    let mut cur = vec![0.0; grid.len()];
    for k in (0..time.n_steps).rev() {
        let t = time.node(k);
        let later = u.slice(k + 1).to_vec();
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            rhs[idx] = later[idx] + dt * source(k, idx, &x);
        }
        extrapolate_boundary(&grid, &later, &mut cur);
        let op = ImplicitStep::assemble(spec, &grid, t, dt, cfg.epsilon)?;
        op.solve(&grid, &rhs, &mut cur)?;
        if let Some(idx) = cur.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                what: "grid solution".into(),
                t,
                x: grid.point(idx),
            });
        }
        u.slice_mut(k).copy_from_slice(&cur);
    }
    Ok(u)
}

/// Linear problem: the driver must not depend on `(v, r)`.
pub fn solve_backward_linear_pde(spec: &ProblemSpec, cfg: &PdeConfig) -> Result<GridFunction> {
    check_supported(spec)?;
    if !spec.driver.is_source_only() {
        return Err(Error::Capability(format!(
            "driver of '{}' depends on the solution; use the semilinear solver",
            spec.name
        )));
    }
    let time = TimeGrid::new(0.0, spec.horizon, cfg.n_steps)?;
    let dp = spec.noise_dim;
    march(spec, cfg, |k, _, x| spec.driver.source_term(time.node(k), x, 0.0, dp))
}

/// `σᵀ u_x` of one slice at every node, `len × d'`.
fn qhat_slice(spec: &ProblemSpec, grid: &SpaceGrid, t: f64, u: &[f64]) -> Vec<f64> {
    let (d, dp) = (grid.dim, spec.noise_dim);
    let mut out = vec![0.0; grid.len() * dp];
    let mut s = vec![0.0; d * dp];
    for idx in 0..grid.len() {
        let x = grid.point(idx);
        spec.sigma.eval_into(t, &x, 0.0, &mut s);
        for j in 0..dp {
            out[idx * dp + j] = (0..d).map(|i| grid.diff1(u, idx, i) * s[i * dp + j]).sum();
        }
    }
    out
}

/// Picard iteration: iterate `n` solves the linear problem with source
/// `f(t, x, u^{(n-1)}, σᵀ u^{(n-1)}_x)`, starting from `u^{(0)} = 0`, until
/// successive iterates differ by less than `picard.tol` in sup norm.
pub fn solve_backward_semilinear_pde(
    spec: &ProblemSpec,
    cfg: &PdeConfig,
    picard: &PicardConfig,
) -> Result<PdeSolution> {
    check_supported(spec)?;
    let (grid, time) = cfg.grids(spec)?;
    let mut log = IterateLog::new(time.nodes()[..time.n_steps].to_vec(), time.dt());
    if spec.driver.is_source_only() {
        let u = solve_backward_linear_pde(spec, cfg)?;
        log.single_pass = true;
        return Ok(PdeSolution {
            u,
            iterations: 1,
            picard: log,
        });
    }
    let dp = spec.noise_dim;
    let lambda1 = picard.lambda1(spec.driver.lipschitz());
    let zeros = vec![0.0; dp];
    let mut prev: Option<(GridFunction, Vec<Vec<f64>>)> = None;
    let mut weighted = Vec::new();
    for iter in 1..=picard.max_iters {
        let u = {
            let prev_ref = prev.as_ref();
            march(spec, cfg, |k, idx, x| {
                let t = time.node(k);
                match prev_ref {
                    None => spec.driver.eval(t, x, 0.0, 0.0, &zeros),
                    Some((pu, pq)) => spec
                        .driver
                        .eval(t, x, 0.0, pu.slice(k)[idx], &pq[k][idx * dp..(idx + 1) * dp]),
                }
            })?
        };
        let q: Vec<Vec<f64>> = (0..=time.n_steps)
            .map(|k| qhat_slice(spec, &grid, time.node(k), u.slice(k)))
            .collect();
        let mut dist = Vec::with_capacity(time.n_steps);
        let mut sup = 0.0f64;
        for k in 0..time.n_steps {
            let (mut s, pu) = (0.0, prev.as_ref().map(|(p, _)| p.slice(k)));
            for idx in 0..grid.len() {
                let du = u.slice(k)[idx] - pu.map_or(0.0, |p| p[idx]);
                sup = sup.max(du.abs());
                let dq: f64 = (0..dp)
                    .map(|j| {
                        let a = q[k][idx * dp + j];
                        let b = prev.as_ref().map_or(0.0, |(_, pq)| pq[k][idx * dp + j]);
                        (a - b) * (a - b)
                    })
                    .sum();
                s += grid.weight(idx) * (du * du + dq);
            }
            dist.push(s);
        }
        log.push(dist, sup);
        weighted.push(log.weighted_distance(iter, lambda1));
        if sup < picard.tol {
            return Ok(PdeSolution {
                u,
                iterations: iter,
                picard: log,
            });
        }
        prev = Some((u, q));
    }
    Err(Error::PicardNotConverged {
        iterations: picard.max_iters,
        ratios: ratios(&weighted),
    })
}
