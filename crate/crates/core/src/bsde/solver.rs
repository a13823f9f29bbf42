//! Backward regression passes and the Picard loop on the driver.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::basis::RegressionBasis;
use crate::analysis::picard::{lambda_one, ratios, IterateLog};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io;
use crate::paths::ForwardEnsemble;
use crate::problem::ProblemSpec;

/// Number of batches behind the start-value standard error.
pub const BATCHES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Calibrated `C₁`; `None` means the default 1 and the relaxed ratio
    /// threshold.
    pub c1: Option<f64>,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 50,
            c1: None,
        }
    }
}

impl PicardConfig {
    pub fn c1_or_default(&self) -> f64 {
        self.c1.unwrap_or(1.0)
    }

    pub fn lambda1(&self, lipschitz: f64) -> f64 {
        lambda_one(lipschitz, self.c1_or_default())
    }

    pub fn ratio_limit(&self) -> f64 {
        if self.c1.is_some() {
            crate::analysis::picard::RATIO_LIMIT
        } else {
            crate::analysis::picard::RATIO_LIMIT_UNCALIBRATED
        }
    }
}

/// One JSON-lines record per backward step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub step: usize,
    pub residual: f64,
    pub condition: f64,
    pub ridge: bool,
}

/// `(Y, Z)` on every path of a forward ensemble.
#[derive(Debug, Clone)]
pub struct BackwardEnsemble {
    pub forward: Arc<ForwardEnsemble>,
    y: Vec<f64>,
    z: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostic>,
    pub picard_iterations: usize,
    pub picard: IterateLog,
    /// Batch-means standard error of the start value.
    pub start_stderr: f64,
}

impl BackwardEnsemble {
    fn nodes(&self) -> usize {
        self.forward.n_steps() + 1
    }

    pub fn noise_dim(&self) -> usize {
        self.forward.bundle.noise_dim
    }

    #[inline]
    pub fn y(&self, path: usize, k: usize) -> f64 {
        self.y[path * self.nodes() + k]
    }

    #[inline]
    pub fn z(&self, path: usize, k: usize) -> &[f64] {
        let dp = self.noise_dim();
        let off = (path * (self.nodes() - 1) + k) * dp;
        &self.z[off..off + dp]
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    /// `Y_t^{t,x}`; identical on every path.
    pub fn start_value(&self) -> f64 {
        self.y(0, self.forward.start_index)
    }

    pub fn ridge_used(&self) -> bool {
        self.diagnostics.iter().any(|d| d.ridge)
    }

    /// Columnar dump: header of the forward ensemble, payload `Y` then `Z`.
    pub fn export(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        io::write_columnar(f, &io::ensemble_header(&self.forward), &[&self.y, &self.z])
    }

    pub fn export_diagnostics(&self, path: &Path) -> Result<()> {
        io::write_json_lines(std::io::BufWriter::new(std::fs::File::create(path)?), &self.diagnostics)
    }
}

struct Pass {
    y: Vec<f64>,
    z: Vec<f64>,
    diagnostics: Vec<StepDiagnostic>,
    stderr: f64,
}

/// Features of node `k`: the state, plus the path channel for non-Markov
/// specs.
fn features(fwd: &ForwardEnsemble, k: usize) -> (Vec<f64>, usize) {
    let d = fwd.dim;
    let nf = d + usize::from(fwd.tracks_path_channel());
    let mut out = Vec::with_capacity(fwd.n_paths() * nf);
    for p in 0..fwd.n_paths() {
        out.extend_from_slice(fwd.state(p, k));
        if fwd.tracks_path_channel() {
            out.push(fwd.path_value(p, k));
        }
    }
    (out, nf)
}

/// One linear backward pass with the driver frozen at `prev` (`None` is the
/// zero iterate).
///
/// Regression targets are the pathwise backward sums `Ỹ_{k+1}` (terminal
/// value plus the generator increments collected along the path) rather than
/// the regressed `Y_{k+1}`. Both have the same conditional expectation given
/// `X_k`, but the pathwise targets keep regression errors from compounding
/// over the steps.
fn backward_pass(
    exec: Exec,
    spec: &ProblemSpec,
    fwd: &ForwardEnsemble,
    basis: Option<RegressionBasis>,
    prev: Option<(&[f64], &[f64])>,
) -> Result<Pass> {
    let n = fwd.n_paths();
    let steps = fwd.n_steps();
    let nodes = steps + 1;
    let dp = spec.noise_dim;
    let k0 = fwd.start_index;
    let dt = fwd.grid().dt();
    let driver = &spec.driver;
    let source_only = driver.is_source_only();
    let zero_driver = driver.is_zero();
    let zero_nu = spec.nu.is_identically_zero();

    let mut y = vec![0.0; n * nodes];
    let mut z = vec![0.0; n * steps * dp];
    let mut diagnostics = Vec::with_capacity(steps - k0);
    let mut stderr = 0.0;

    exec.for_each_chunk_mut(&mut y, nodes, |p, row| {
        row[steps] = spec
            .terminal
            .eval(spec.horizon, fwd.state(p, steps), fwd.path_value(p, steps));
    });

    let mut pathwise: Vec<f64> = (0..n).map(|p| y[p * nodes + steps]).collect();
    let zero_r = vec![0.0; dp];
    let mut targets: Vec<Vec<f64>> = vec![vec![0.0; n]; 1 + dp];
    for k in (k0..steps).rev() {
        let t = fwd.grid().node(k);
        targets[0].copy_from_slice(&pathwise);
        for j in 0..dp {
            for p in 0..n {
                targets[1 + j][p] = pathwise[p] * fwd.increment(p, k)[j] / dt;
            }
        }
        let (feat, nf) = features(fwd, k);
        let basis = basis.unwrap_or_else(|| RegressionBasis::default_for(nf));
        let fit = basis.fit(exec, &feat, nf, &targets)?;
        diagnostics.push(StepDiagnostic {
            step: k,
            residual: fit.residual,
            condition: fit.condition,
            ridge: fit.ridge,
        });

        let mut gen = vec![(0.0, 0.0, 0.0); n];
        let blocks = exec.map_blocks(n, |range| -> Result<Vec<(f64, f64, f64)>> {
            let mut nu = vec![0.0; dp];
            let mut out = Vec::with_capacity(range.len());
            for p in range {
                let x = fwd.state(p, k);
                let w = fwd.path_value(p, k);
                let c = spec.c.eval_scalar(t, x, w);
                if dt * c.abs() >= 1.0 {
                    return Err(Error::StepSize {
                        dt,
                        rate: c.abs(),
                        product: dt * c.abs(),
                    });
                }
                let g = if zero_driver {
                    0.0
                } else if source_only {
                    driver.source_term(t, x, w, dp)
                } else {
                    match prev {
                        Some((py, pz)) => {
                            let off = (p * steps + k) * dp;
                            driver.eval(t, x, w, py[p * nodes + k], &pz[off..off + dp])
                        }
                        None => driver.eval(t, x, w, 0.0, &zero_r),
                    }
                };
                let nz = if zero_nu {
                    0.0
                } else {
                    spec.nu.eval_into(t, x, w, &mut nu);
                    (0..dp).map(|j| nu[j] * fit.fitted[1 + j][p]).sum()
                };
                if !(g.is_finite() && c.is_finite() && nz.is_finite()) {
                    return Err(Error::Evaluation {
                        what: "backward generator".into(),
                        t,
                        x: x.to_vec(),
                    });
                }
                out.push((c, g, nz));
            }
            Ok(out)
        });
        let mut off = 0;
        for b in blocks {
            let b = b?;
            gen[off..off + b.len()].copy_from_slice(&b);
            off += b.len();
        }
        for p in 0..n {
            let (c, g, nz) = gen[p];
            y[p * nodes + k] = (fit.fitted[0][p] + dt * (nz + g)) / (1.0 - dt * c);
            for j in 0..dp {
                z[(p * steps + k) * dp + j] = fit.fitted[1 + j][p];
            }
        }
        for p in 0..n {
            let (c, g, nz) = gen[p];
            pathwise[p] = (pathwise[p] + dt * (nz + g)) / (1.0 - dt * c);
        }
    }
    if k0 < steps {
        stderr = batch_stderr(&pathwise);
    }
    for p in 0..n {
        let v = y[p * nodes + k0];
        y[p * nodes..p * nodes + k0].iter_mut().for_each(|o| *o = v);
    }
    diagnostics.reverse();
    Ok(Pass {
        y,
        z,
        diagnostics,
        stderr,
    })
}

/// Batch-means standard error of the pathwise backward sums at the start
/// node; their mean is the regressed start value.
fn batch_stderr(pathwise: &[f64]) -> f64 {
    let n = pathwise.len();
    if n < 2 * BATCHES {
        return f64::NAN;
    }
    let size = n / BATCHES;
    let vals: Vec<f64> = pathwise
        .chunks_exact(size)
        .take(BATCHES)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let mean = vals.iter().sum::<f64>() / BATCHES as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (var / BATCHES as f64).sqrt()
}

/// Linear generator `c Y + ν·Z + F(t, x)`: a single backward pass.
pub fn solve_linear_bsde(
    spec: &ProblemSpec,
    forward: &Arc<ForwardEnsemble>,
    basis: Option<RegressionBasis>,
) -> Result<BackwardEnsemble> {
    solve_linear_bsde_with(Exec::default(), spec, forward, basis)
}

pub fn solve_linear_bsde_with(
    exec: Exec,
    spec: &ProblemSpec,
    forward: &Arc<ForwardEnsemble>,
    basis: Option<RegressionBasis>,
) -> Result<BackwardEnsemble> {
    if !spec.driver.is_source_only() {
        return Err(Error::Capability(
            "linear solve needs a driver without value or Z dependence".into(),
        ));
    }
    forward.check_exit_budget()?;
    let pass = backward_pass(exec, spec, forward, basis, None)?;
    let mut log = iterate_log(forward);
    log.single_pass = true;
    Ok(finish(forward, pass, 1, log))
}

fn iterate_log(fwd: &ForwardEnsemble) -> IterateLog {
    let g = fwd.grid();
    IterateLog::new((fwd.start_index..g.n_steps).map(|k| g.node(k)).collect(), g.dt())
}

fn finish(forward: &Arc<ForwardEnsemble>, pass: Pass, iterations: usize, log: IterateLog) -> BackwardEnsemble {
    BackwardEnsemble {
        forward: forward.clone(),
        y: pass.y,
        z: pass.z,
        diagnostics: pass.diagnostics,
        picard_iterations: iterations,
        picard: log,
        start_stderr: pass.stderr,
    }
}

/// Picard iteration on the driver: iterate `n` is the linear pass with the
/// driver frozen at iterate `n - 1`, starting from zero. Stops once the
/// λ₁-weighted L² distance between iterates drops below `picard.tol`.
pub fn solve_semilinear_bsde(
    spec: &ProblemSpec,
    forward: &Arc<ForwardEnsemble>,
    basis: Option<RegressionBasis>,
    picard: &PicardConfig,
) -> Result<BackwardEnsemble> {
    solve_semilinear_bsde_with(Exec::default(), spec, forward, basis, picard)
}

pub fn solve_semilinear_bsde_with(
    exec: Exec,
    spec: &ProblemSpec,
    forward: &Arc<ForwardEnsemble>,
    basis: Option<RegressionBasis>,
    picard: &PicardConfig,
) -> Result<BackwardEnsemble> {
    if spec.driver.is_source_only() {
        return solve_linear_bsde_with(exec, spec, forward, basis);
    }
    forward.check_exit_budget()?;
    let dt = forward.grid().dt();
    let lip = spec.driver.lipschitz();
    if dt * lip >= 1.0 {
        return Err(Error::PicardDivergence {
            lipschitz: lip,
            dt,
            ratios: Vec::new(),
        });
    }
    let lambda1 = picard.lambda1(lip);
    let n = forward.n_paths();
    let steps = forward.n_steps();
    let nodes = steps + 1;
    let dp = spec.noise_dim;
    let k0 = forward.start_index;
    let mut log = iterate_log(forward);
    let mut prev: Option<Pass> = None;
    let mut weighted = Vec::new();
    let mut above_one = 0;
    for iter in 1..=picard.max_iters {
        let pass = backward_pass(exec, spec, forward, basis, prev.as_ref().map(|p| (&p.y[..], &p.z[..])))?;
        let mut dist = vec![0.0; steps - k0];
        let mut sup = 0.0f64;
        for (i, k) in (k0..steps).enumerate() {
            let (mut s, mut sz) = (0.0, 0.0);
            for p in 0..n {
                let a = pass.y[p * nodes + k];
                let b = prev.as_ref().map_or(0.0, |q| q.y[p * nodes + k]);
                s += (a - b) * (a - b);
                sup = sup.max((a - b).abs());
                for j in 0..dp {
                    let off = (p * steps + k) * dp + j;
                    let dz = pass.z[off] - prev.as_ref().map_or(0.0, |q| q.z[off]);
                    sz += dz * dz;
                }
            }
            dist[i] = (s + sz) / n as f64;
        }
        log.push(dist, sup);
        weighted.push(log.weighted_distance(iter, lambda1));
        let r = ratios(&weighted);
        if let Some(&last) = r.last() {
            if last >= 1.0 {
                above_one += 1;
                if above_one >= 2 {
                    return Err(Error::PicardDivergence {
                        lipschitz: lip,
                        dt,
                        ratios: r,
                    });
                }
            } else {
                above_one = 0;
            }
        }
        if weighted[iter - 1].sqrt() < picard.tol {
            return Ok(finish(forward, pass, iter, log));
        }
        prev = Some(pass);
    }
    Err(Error::PicardNotConverged {
        iterations: picard.max_iters,
        ratios: ratios(&weighted),
    })
}
