//! Value-field estimates `u_MC(t, x) = Y_t^{t,x}` and the flow-property
//! residual.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::basis::RegressionBasis;
use super::solver::{solve_semilinear_bsde_with, BackwardEnsemble, PicardConfig};
use crate::analysis::picard::IterateLog;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::paths::{euler_maruyama_forward_with, generate_brownian_with, BrownianBundle, StartPoint, TimeGrid};
use crate::problem::ProblemSpec;
use crate::seed;

/// Monte Carlo settings shared by the backward solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// `None` picks [`RegressionBasis::default_for`] per feature count.
    pub basis: Option<RegressionBasis>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 200,
            seed: 1,
            basis: None,
            exec: Exec::default(),
        }
    }
}

impl McConfig {
    pub fn bundle(&self, spec: &ProblemSpec) -> Result<Arc<BrownianBundle>> {
        let grid = TimeGrid::new(0.0, spec.horizon, self.n_steps)?;
        Ok(Arc::new(generate_brownian_with(
            self.exec,
            spec.noise_dim,
            grid,
            self.n_paths,
            self.seed,
        )?))
    }
}

/// Forward plus backward solve from one start point on a given bundle.
pub fn solve_from(
    spec: &ProblemSpec,
    start: &StartPoint,
    bundle: &Arc<BrownianBundle>,
    mc: &McConfig,
    picard: &PicardConfig,
) -> Result<BackwardEnsemble> {
    let fwd = Arc::new(euler_maruyama_forward_with(mc.exec, spec, start, bundle)?);
    solve_semilinear_bsde_with(mc.exec, spec, &fwd, mc.basis, picard)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub stderr: f64,
    pub picard_iterations: usize,
    pub exit_fraction: f64,
    pub picard: IterateLog,
}

/// `u_MC` on a product grid `ts × xs`, in `t`-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub points: Vec<ValuePoint>,
}

impl ValueField {
    pub fn get(&self, t: f64, x: &[f64]) -> Option<&ValuePoint> {
        self.points
            .iter()
            .find(|p| (p.t - t).abs() < 1e-12 && p.x.iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-12))
    }
}

/// Runs one forward/backward solve per grid point on a common bundle. At
/// `t = T` the value is `φ(x)` with zero error.
pub fn estimate_value_field(
    spec: &ProblemSpec,
    ts: &[f64],
    xs: &[Vec<f64>],
    mc: &McConfig,
    picard: &PicardConfig,
) -> Result<ValueField> {
    for x in xs {
        if x.len() != spec.dim || !spec.domain.contains(x) {
            return Err(Error::Domain(format!("grid point {x:?} outside the domain box")));
        }
    }
    let bundle = mc.bundle(spec)?;
    let mut points = Vec::with_capacity(ts.len() * xs.len());
    for &t in ts {
        for x in xs {
            if (spec.horizon - t).abs() <= 1e-12 * spec.horizon {
                points.push(ValuePoint {
                    t,
                    x: x.clone(),
                    value: spec.terminal.eval(spec.horizon, x, 0.0),
                    stderr: 0.0,
                    picard_iterations: 0,
                    exit_fraction: 0.0,
                    picard: IterateLog::default(),
                });
                continue;
            }
            let back = solve_from(spec, &StartPoint::new(t, x.clone()), &bundle, mc, picard)?;
            points.push(ValuePoint {
                t,
                x: x.clone(),
                value: back.start_value(),
                stderr: back.start_stderr,
                picard_iterations: back.picard_iterations,
                exit_fraction: back.forward.exit_fraction(),
                picard: back.picard.clone(),
            });
        }
    }
    Ok(ValueField { points })
}

/// Nested-solve settings for the flow-property check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedConfig {
    /// Outer paths that get a nested solve.
    pub outer_samples: usize,
    pub nested_paths: usize,
    /// Cap on `outer_samples × nested_paths × remaining steps`.
    pub cost_cap: u64,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            outer_samples: 100,
            nested_paths: 1_000,
            cost_cap: 1_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResidual {
    /// `rms(Y_s^{t,x} − Y_s^{s,X_s}) / rms(Y_s^{t,x})`
    pub residual: f64,
    pub rms_outer: f64,
    pub samples: usize,
    pub cost: u64,
}

/// Compares the outer `Y_s^{t,x}` on a subsample of paths with nested
/// solves restarted from `(s, X_s, w_s)` on those paths.
pub fn flow_property_residual(
    spec: &ProblemSpec,
    start: &StartPoint,
    s: f64,
    mc: &McConfig,
    nested: &NestedConfig,
    picard: &PicardConfig,
) -> Result<FlowResidual> {
    if !(start.t < s && s < spec.horizon) {
        return Err(Error::Domain(format!(
            "flow property needs t < s < T, got t = {}, s = {s}",
            start.t
        )));
    }
    let bundle = mc.bundle(spec)?;
    let ks = bundle.grid.index_of(s)?;
    let m = nested.outer_samples.min(mc.n_paths).max(1);
    let cost = m as u64 * nested.nested_paths as u64 * (mc.n_steps - ks) as u64;
    if cost > nested.cost_cap {
        return Err(Error::Budget {
            cost,
            cap: nested.cost_cap,
        });
    }
    let outer = solve_from(spec, start, &bundle, mc, picard)?;
    let fwd = &outer.forward;
    let stride = mc.n_paths / m;
    let inner_mc = McConfig {
        n_paths: nested.nested_paths,
        ..*mc
    };
    let (mut se, mut sy) = (0.0, 0.0);
    for i in 0..m {
        let p = i * stride;
        let inner_start =
            StartPoint::new(bundle.grid.node(ks), fwd.state(p, ks).to_vec()).with_path_value(fwd.path_value(p, ks));
        let inner_bundle = McConfig {
            seed: seed::split(mc.seed, 1 + i as u64),
            ..inner_mc
        }
        .bundle(spec)?;
        let inner = solve_from(spec, &inner_start, &inner_bundle, &inner_mc, picard)?;
        let yo = outer.y(p, ks);
        se += (yo - inner.start_value()).powi(2);
        sy += yo * yo;
    }
    let rms_outer = (sy / m as f64).sqrt();
    let rms_err = (se / m as f64).sqrt();
    Ok(FlowResidual {
        residual: if rms_outer > 0.0 { rms_err / rms_outer } else { rms_err },
        rms_outer,
        samples: m,
        cost,
    })
}
