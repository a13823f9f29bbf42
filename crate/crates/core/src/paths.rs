//! Brownian bundles and Euler-Maruyama forward ensembles.
//!
//! Arrays are path-major: `increments[path][k][j]`, `x[path][k][i]`. Each path
//! draws from its own ChaCha stream, so the bundle is a pure function of
//! `(seed, shape)` whatever the thread schedule.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::problem::ProblemSpec;

/// Largest tolerated fraction of clamped paths.
pub const EXIT_LIMIT: f64 = 0.01;

/// Uniform grid `t0 < t0 + Δt < ... < T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidInput("time grid needs n_steps >= 1".into()));
        }
        if !(horizon > t0) || !t0.is_finite() || !horizon.is_finite() {
            return Err(Error::Domain(format!("time grid needs t0 < T, got [{t0}, {horizon}]")));
        }
        Ok(Self { t0, horizon, n_steps })
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.node(k)).collect()
    }

    /// Index of the node nearest to `t`, counted back from `T`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * (self.horizon - self.t0);
        if t < self.t0 - tol || t > self.horizon + tol {
            return Err(Error::Domain(format!(
                "time {t} outside grid [{}, {}]",
                self.t0, self.horizon
            )));
        }
        let back = ((self.horizon - t) / self.dt()).round() as usize;
        Ok(self.n_steps - back.min(self.n_steps))
    }
}

/// Brownian increments `ΔW ~ N(0, Δt I)` for `n_paths` paths.
#[derive(Debug, Clone)]
pub struct BrownianBundle {
    pub noise_dim: usize,
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    increments: Vec<f64>,
}

impl BrownianBundle {
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `ΔW_k` on `path`, length `d'`.
    #[inline]
    pub fn increment(&self, path: usize, k: usize) -> &[f64] {
        let dp = self.noise_dim;
        let off = (path * self.grid.n_steps + k) * dp;
        &self.increments[off..off + dp]
    }

    /// All increments of one path, `n_steps × d'`.
    pub fn path(&self, path: usize) -> &[f64] {
        let len = self.grid.n_steps * self.noise_dim;
        &self.increments[path * len..(path + 1) * len]
    }

    /// Sums consecutive groups of `factor` increments; the coarse bundle is
    /// driven by the same Brownian path.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidInput(format!(
                "cannot coarsen {} steps by {factor}",
                self.grid.n_steps
            )));
        }
        let n = self.grid.n_steps / factor;
        let dp = self.noise_dim;
        let mut inc = vec![0.0; self.n_paths * n * dp];
        for p in 0..self.n_paths {
            for k in 0..n {
                for j in 0..dp {
                    inc[(p * n + k) * dp + j] = (0..factor).map(|m| self.increment(p, k * factor + m)[j]).sum();
                }
            }
        }
        Ok(Self {
            noise_dim: dp,
            grid: TimeGrid::new(self.grid.t0, self.grid.horizon, n)?,
            n_paths: self.n_paths,
            seed: self.seed,
            increments: inc,
        })
    }

    pub(crate) fn from_raw(
        noise_dim: usize,
        grid: TimeGrid,
        n_paths: usize,
        seed: u64,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if increments.len() != n_paths * grid.n_steps * noise_dim {
            return Err(Error::InvalidInput(format!(
                "increment payload has {} values, expected {}",
                increments.len(),
                n_paths * grid.n_steps * noise_dim
            )));
        }
        Ok(Self {
            noise_dim,
            grid,
            n_paths,
            seed,
            increments,
        })
    }
}

/// Per-path generator: the bundle seed with the path index as stream id.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

pub fn generate_brownian(noise_dim: usize, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<BrownianBundle> {
    generate_brownian_with(Exec::default(), noise_dim, grid, n_paths, seed)
}

pub fn generate_brownian_with(
    exec: Exec,
    noise_dim: usize,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<BrownianBundle> {
    if n_paths == 0 || noise_dim == 0 {
        return Err(Error::InvalidInput("bundle needs n_paths >= 1 and d' >= 1".into()));
    }
    let sqdt = grid.dt().sqrt();
    let per_path = grid.n_steps * noise_dim;
    let mut increments = vec![0.0; n_paths * per_path];
    exec.for_each_chunk_mut(&mut increments, per_path, |p, chunk| {
        let mut rng = path_rng(seed, p);
        for v in chunk.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = sqdt * z;
        }
    });
    Ok(BrownianBundle {
        noise_dim,
        grid,
        n_paths,
        seed,
        increments,
    })
}

/// Initial condition `(t, x)` plus the starting value of the path channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub w: f64,
}

impl StartPoint {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x, w: 0.0 }
    }

    pub fn with_path_value(mut self, w: f64) -> Self {
        self.w = w;
        self
    }
}

/// Forward states `X_s^{t,x}` on the bundle grid. Nodes before the start
/// index hold the frozen initial state.
#[derive(Debug, Clone)]
pub struct ForwardEnsemble {
    pub start: StartPoint,
    pub start_index: usize,
    pub dim: usize,
    pub bundle: Arc<BrownianBundle>,
    x: Vec<f64>,
    w: Option<Vec<f64>>,
    exited: Vec<bool>,
}

impl ForwardEnsemble {
    pub fn n_paths(&self) -> usize {
        self.bundle.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.bundle.grid.n_steps
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.bundle.grid
    }

    pub fn states(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let d = self.dim;
        let off = (path * (self.n_steps() + 1) + k) * d;
        &self.x[off..off + d]
    }

    /// Path channel value at node `k`; the start value when the spec is
    /// Markov and the channel was not stored.
    #[inline]
    pub fn path_value(&self, path: usize, k: usize) -> f64 {
        match &self.w {
            Some(w) => w[path * (self.n_steps() + 1) + k],
            None => self.start.w,
        }
    }

    pub fn tracks_path_channel(&self) -> bool {
        self.w.is_some()
    }

    pub fn increment(&self, path: usize, k: usize) -> &[f64] {
        self.bundle.increment(path, k)
    }

    pub fn exited(&self, path: usize) -> bool {
        self.exited[path]
    }

    pub fn exit_fraction(&self) -> f64 {
        self.exited.iter().filter(|&&e| e).count() as f64 / self.n_paths() as f64
    }

    /// Fails with [`Error::ExitBudget`] when more than 1% of paths were clamped.
    pub fn check_exit_budget(&self) -> Result<()> {
        let f = self.exit_fraction();
        if f > EXIT_LIMIT {
            return Err(Error::ExitBudget {
                fraction: f,
                limit: EXIT_LIMIT,
            });
        }
        Ok(())
    }
}

struct PathBlock {
    x: Vec<f64>,
    w: Vec<f64>,
    exited: Vec<bool>,
}

pub fn euler_maruyama_forward(
    spec: &ProblemSpec,
    start: &StartPoint,
    bundle: &Arc<BrownianBundle>,
) -> Result<ForwardEnsemble> {
    euler_maruyama_forward_with(Exec::default(), spec, start, bundle)
}

/// `X_{k+1} = X_k + b(t_k, X_k) Δt + σ(t_k, X_k) ΔW_k`, clamped to the
/// domain box, with the path channel `w` advanced by `ΔW^1_k`.
pub fn euler_maruyama_forward_with(
    exec: Exec,
    spec: &ProblemSpec,
    start: &StartPoint,
    bundle: &Arc<BrownianBundle>,
) -> Result<ForwardEnsemble> {
    let d = spec.dim;
    let dp = spec.noise_dim;
    if start.x.len() != d {
        return Err(Error::Structural(format!(
            "start point has dimension {}, spec has {d}",
            start.x.len()
        )));
    }
    if bundle.noise_dim != dp {
        return Err(Error::Structural(format!(
            "bundle has d' = {}, spec has {dp}",
            bundle.noise_dim
        )));
    }
    if (bundle.grid.horizon - spec.horizon).abs() > 1e-12 * spec.horizon.max(1.0) {
        return Err(Error::Structural(format!(
            "bundle horizon {} differs from spec horizon {}",
            bundle.grid.horizon, spec.horizon
        )));
    }
    let grid = bundle.grid;
    let k0 = grid.index_of(start.t)?;
    let n = grid.n_steps;
    let dt = grid.dt();
    let keep_w = !spec.is_deterministic();
    let sigma_const = spec.sigma.is_identically_zero();

    let blocks = exec.map_blocks(bundle.n_paths, |range| -> Result<PathBlock> {
        let np = range.len();
        let mut xs = vec![0.0; np * (n + 1) * d];
        let mut ws = if keep_w { vec![0.0; np * (n + 1)] } else { Vec::new() };
        let mut exited = vec![false; np];
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * dp];
        let mut cur = start.x.clone();
        for (local, p) in range.enumerate() {
            cur.copy_from_slice(&start.x);
            let mut w = start.w;
            let base = local * (n + 1);
            for k in 0..=n {
                xs[(base + k) * d..(base + k + 1) * d].copy_from_slice(&cur);
                if keep_w {
                    ws[base + k] = w;
                }
                if k == n || k < k0 {
                    continue;
                }
                let t = grid.node(k);
                spec.b.eval_into(t, &cur, w, &mut b);
                if !sigma_const {
                    spec.sigma.eval_into(t, &cur, w, &mut s);
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Evaluation {
                        what: "drift b".into(),
                        t,
                        x: cur.clone(),
                    });
                }
                if !sigma_const && s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Evaluation {
                        what: "diffusion sigma".into(),
                        t,
                        x: cur.clone(),
                    });
                }
                let dw = bundle.increment(p, k);
                for i in 0..d {
                    let mut step = b[i] * dt;
                    if !sigma_const {
                        for j in 0..dp {
                            step += s[i * dp + j] * dw[j];
                        }
                    }
                    cur[i] += step;
                }
                if spec.domain.clamp(&mut cur) {
                    exited[local] = true;
                }
                w += dw[0];
            }
        }
        Ok(PathBlock { x: xs, w: ws, exited })
    });

    let mut x = Vec::with_capacity(bundle.n_paths * (n + 1) * d);
    let mut w = if keep_w {
        Some(Vec::with_capacity(bundle.n_paths * (n + 1)))
    } else {
        None
    };
    let mut exited = Vec::with_capacity(bundle.n_paths);
    for blk in blocks {
        let blk = blk?;
        x.extend_from_slice(&blk.x);
        if let Some(w) = w.as_mut() {
            w.extend_from_slice(&blk.w);
        }
        exited.extend_from_slice(&blk.exited);
    }
    Ok(ForwardEnsemble {
        start: start.clone(),
        start_index: k0,
        dim: d,
        bundle: bundle.clone(),
        x,
        w,
        exited,
    })
}

/// Monte Carlo estimate of the normalised flow moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMoment {
    /// `E sup_s |X_s^{t',x'} - X_s^{t,x}|^{2p}`
    pub numerator: f64,
    /// `(1 + |x|^{2p} + |x'|^{2p}) (|x' - x|^{2p} + |t' - t|^p)`
    pub denominator: f64,
    pub ratio: f64,
    pub stderr: f64,
}

/// Normalised flow moment, both starts driven by one common bundle.
pub fn flow_moment_ratio(
    spec: &ProblemSpec,
    a: &StartPoint,
    b: &StartPoint,
    p: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<f64> {
    flow_moment(Exec::default(), spec, a, b, p, n_paths, n_steps, seed).map(|m| m.ratio)
}

#[allow(clippy::too_many_arguments)]
pub fn flow_moment(
    exec: Exec,
    spec: &ProblemSpec,
    a: &StartPoint,
    b: &StartPoint,
    p: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<FlowMoment> {
    if p < 1.0 {
        return Err(Error::Domain(format!("moment order p must be >= 1, got {p}")));
    }
    let dx = norm(&a.x.iter().zip(&b.x).map(|(u, v)| u - v).collect::<Vec<_>>());
    let dt = (a.t - b.t).abs();
    if dx == 0.0 && dt == 0.0 {
        return Err(Error::InvalidInput(
            "identical start points give a zero denominator".into(),
        ));
    }
    if dx > 1.0 && dt > 1.0 {
        return Err(Error::Domain(format!(
            "start points too far apart (|dx| = {dx}, |dt| = {dt})"
        )));
    }
    let grid = TimeGrid::new(0.0, spec.horizon, n_steps)?;
    let bundle = Arc::new(generate_brownian_with(exec, spec.noise_dim, grid, n_paths, seed)?);
    let ea = euler_maruyama_forward_with(exec, spec, a, &bundle)?;
    let eb = euler_maruyama_forward_with(exec, spec, b, &bundle)?;
    let two_p = 2.0 * p;
    let partials = exec.map_blocks(n_paths, |range| {
        let mut diff = vec![0.0; spec.dim];
        let (mut s, mut s2) = (0.0, 0.0);
        for path in range {
            let mut sup = 0.0f64;
            for k in 0..=n_steps {
                for ((o, u), v) in diff.iter_mut().zip(ea.state(path, k)).zip(eb.state(path, k)) {
                    *o = u - v;
                }
                sup = sup.max(norm(&diff));
            }
            let m = sup.powf(two_p);
            s += m;
            s2 += m * m;
        }
        (s, s2)
    });
    let (s, s2) = partials
        .into_iter()
        .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    let n = n_paths as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    let denominator = (1.0 + norm(&a.x).powf(two_p) + norm(&b.x).powf(two_p)) * (dx.powf(two_p) + dt.powf(p));
    Ok(FlowMoment {
        numerator: mean,
        denominator,
        ratio: mean / denominator,
        stderr: (var / n).sqrt() / denominator,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Paths in the pre-flight burst that fixes a default truncation radius.
pub const PREFLIGHT_PATHS: usize = 10_000;
const PREFLIGHT_STEPS: usize = 100;

/// Default radius: 1.2 times the largest coordinate reached by a burst of
/// [`PREFLIGHT_PATHS`] unclamped paths from `(0, x0)`, rounded up to 0.5 and
/// at least 1. With `10⁴` paths the next path exceeds the burst maximum with
/// probability about `10⁻⁴`; the margin covers the rest.
pub fn preflight_radius(spec: &ProblemSpec, x0: &[f64], seed: u64) -> Result<f64> {
    let open = spec.with_radius(f64::INFINITY);
    let grid = TimeGrid::new(0.0, spec.horizon, PREFLIGHT_STEPS)?;
    let bundle = Arc::new(generate_brownian(spec.noise_dim, grid, PREFLIGHT_PATHS, seed)?);
    let ens = euler_maruyama_forward(&open, &StartPoint::new(0.0, x0.to_vec()), &bundle)?;
    let sup = ens.states().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !sup.is_finite() {
        return Err(Error::Evaluation {
            what: "pre-flight forward paths".into(),
            t: 0.0,
            x: x0.to_vec(),
        });
    }
    Ok(((1.2 * sup) * 2.0).ceil().max(2.0) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CoefficientField, Shape};

    fn bm_spec() -> ProblemSpec {
        ProblemSpec::builder("bm", 1, 1)
            .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
            .radius(50.0)
            .build()
            .unwrap()
    }

    #[test]
    fn grid_nodes_and_index() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.index_of(0.5).unwrap(), 2);
        assert_eq!(g.index_of(0.0).unwrap(), 0);
        assert!(g.index_of(1.5).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn bundle_is_reproducible_and_schedule_free() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let a = generate_brownian_with(Exec::Parallel, 2, g, 300, 7).unwrap();
        let b = generate_brownian_with(Exec::Sequential, 2, g, 300, 7).unwrap();
        assert_eq!(a.increments(), b.increments());
        let c = generate_brownian(2, g, 300, 8).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn coarsen_preserves_endpoint() {
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let b = generate_brownian(1, g, 5, 1).unwrap();
        let c = b.coarsen(4).unwrap();
        for p in 0..5 {
            let wf: f64 = b.path(p).iter().sum();
            let wc: f64 = c.path(p).iter().sum();
            assert!((wf - wc).abs() < 1e-12);
        }
        assert!(b.coarsen(3).is_err());
    }

    #[test]
    fn frozen_before_start_and_at_start() {
        let spec = bm_spec();
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let bundle = Arc::new(generate_brownian(1, g, 50, 3).unwrap());
        let e = euler_maruyama_forward(&spec, &StartPoint::new(0.5, vec![0.3]), &bundle).unwrap();
        assert_eq!(e.start_index, 5);
        for p in 0..50 {
            for k in 0..=5 {
                assert_eq!(e.state(p, k), &[0.3]);
            }
        }
        assert!(e.state(0, 10)[0] != 0.3);
    }

    #[test]
    fn preflight_covers_brownian_paths() {
        let spec = bm_spec();
        let r = preflight_radius(&spec, &[0.0], 11).unwrap();
        assert!(r > 3.0 && r < 8.0, "radius {r}");
    }

    #[test]
    fn flow_moment_rejects_identical_starts() {
        let spec = bm_spec();
        let s = StartPoint::new(0.0, vec![0.0]);
        assert!(matches!(
            flow_moment_ratio(&spec, &s, &s, 1.0, 10, 10, 1),
            Err(Error::InvalidInput(_))
        ));
    }
}
