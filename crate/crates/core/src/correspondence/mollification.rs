use serde::{Deserialize, Serialize};

use crate::bsde::{solve_from, BackwardEnsemble, McConfig, PicardConfig};
use crate::error::{Error, Result};
use crate::paths::StartPoint;
use crate::problem::{mollify_spec, ProblemSpec};

/// Smallest accepted log-log slope of the gaps against `ε`.
pub const MOLLIFICATION_SLOPE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollificationReport {
    pub spec: String,
    pub start_t: f64,
    pub start_x: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `E sup_s |Y^ε_s − Y_s|²`, one per `ε`.
    pub gaps: Vec<f64>,
    pub gap_stderr: Vec<f64>,
    /// Least-squares slope of `ln gap` against `ln ε`; `None` when a gap
    /// vanishes.
    pub slope: Option<f64>,
    pub monotone: bool,
    pub pass: bool,
}

/// Least-squares slope of `ln y` against `ln x`; `None` unless every value
/// is positive and there are two distinct abscissae.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Mean and standard error of `sup_{k >= k0} |Y^ε − Y|²` over paths.
fn sup_gap(raw: &BackwardEnsemble, moll: &BackwardEnsemble) -> (f64, f64) {
    let n = raw.forward.n_paths();
    let k0 = raw.forward.start_index;
    let nodes = raw.forward.n_steps() + 1;
    let per_path: Vec<f64> = (0..n)
        .map(|p| (k0..nodes).fold(0.0f64, |m, k| m.max((moll.y(p, k) - raw.y(p, k)).powi(2))))
        .collect();
    let mean = per_path.iter().sum::<f64>() / n as f64;
    let var = per_path.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Solves the backward equation with raw and with mollified data at every
/// `ε` on one Brownian bundle and reports `E sup_s |Y^ε_s − Y_s|²`. Passes
/// when the gaps do not increase as `ε` shrinks and the log-log slope is at
/// least [`MOLLIFICATION_SLOPE`].
pub fn mollification_convergence(
    spec: &ProblemSpec,
    epsilons: &[f64],
    start: &StartPoint,
    mc: &McConfig,
    picard: &PicardConfig,
) -> Result<MollificationReport> {
    if epsilons.len() < 2 || epsilons.windows(2).any(|w| !(w[0] > w[1])) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "mollification widths must be positive and strictly decreasing, at least two: {epsilons:?}"
        )));
    }
    let bundle = mc.bundle(spec)?;
    let raw = solve_from(spec, start, &bundle, mc, picard)?;
    let mut gaps = Vec::with_capacity(epsilons.len());
    let mut gap_stderr = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let moll = solve_from(&mollify_spec(spec, eps)?, start, &bundle, mc, picard)?;
        let (g, se) = sup_gap(&raw, &moll);
        gaps.push(g);
        gap_stderr.push(se);
    }
    let monotone = gaps.windows(2).all(|g| g[1] <= g[0]);
    let slope = loglog_slope(epsilons, &gaps);
    Ok(MollificationReport {
        spec: spec.name.clone(),
        start_t: start.t,
        start_x: start.x.clone(),
        epsilons: epsilons.to_vec(),
        pass: monotone && slope.is_some_and(|s| s >= MOLLIFICATION_SLOPE),
        gaps,
        gap_stderr,
        slope,
        monotone,
    })
}
