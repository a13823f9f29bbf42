use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{pde_error_budget, IterateLog};
use crate::bsde::{estimate_value_field, McConfig, PicardConfig};
use crate::error::{Error, Result};
use crate::pde::{solve_backward_semilinear_pde, PdeConfig};
use crate::problem::{check_all_bounds, validate_driver_lipschitz, validate_parabolicity, ProblemSpec};

const VALIDATION_SAMPLES: usize = 2_000;
const VALIDATION_SEED: u64 = 0xFC0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointComparison {
    pub t: f64,
    pub x: Vec<f64>,
    pub u_pde: f64,
    pub u_mc: f64,
    pub stderr: f64,
    pub discrepancy: f64,
    /// `3·stderr + PDE budget`
    pub tolerance: f64,
    pub pass: bool,
    pub oracle: Option<f64>,
    pub pde_oracle_deviation: Option<f64>,
    pub mc_oracle_deviation: Option<f64>,
    pub mc_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub spec: String,
    pub ts: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub pde_budget: f64,
    pub points: Vec<PointComparison>,
    /// Largest `discrepancy / tolerance`.
    pub max_normalized_discrepancy: f64,
    pub pde_iterations: usize,
    pub pde_picard: IterateLog,
    pub pass: bool,
}

impl CorrespondenceReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.discrepancy))
    }

    pub fn point(&self, t: f64, x: &[f64]) -> Option<&PointComparison> {
        self.points
            .iter()
            .find(|p| (p.t - t).abs() < 1e-12 && p.x.iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-12))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// `t, x.., u_pde, u_mc, stderr, discrepancy, tolerance, pass`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.xs.first().map_or(1, Vec::len);
        let xcols: Vec<String> = if d == 1 {
            vec!["x".into()]
        } else {
            (1..=d).map(|i| format!("x{i}")).collect()
        };
        writeln!(w, "t,{},u_pde,u_mc,stderr,discrepancy,tolerance,pass", xcols.join(","))?;
        for p in &self.points {
            let xs: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                p.t,
                xs.join(","),
                p.u_pde,
                p.u_mc,
                p.stderr,
                p.discrepancy,
                p.tolerance,
                p.pass
            )?;
        }
        Ok(())
    }
}

/// Checks the hypotheses the correspondence needs: deterministic
/// coefficients, `2a − σσᵀ >= 0`, the declared coefficient bounds and the
/// declared driver Lipschitz constant.
pub fn validate_for_correspondence(spec: &ProblemSpec) -> Result<()> {
    if !spec.is_deterministic() {
        return Err(Error::Capability(format!(
            "'{}' has random coefficients; the correspondence check needs a deterministic spec",
            spec.name
        )));
    }
    let par = validate_parabolicity(spec, VALIDATION_SAMPLES, VALIDATION_SEED)?;
    if !par.pass {
        return Err(Error::Structural(format!(
            "2a - σσᵀ has eigenvalue {} at t = {}, x = {:?}",
            par.min_margin, par.worst_t, par.worst_x
        )));
    }
    if let Some(b) = check_all_bounds(spec, VALIDATION_SAMPLES, VALIDATION_SEED)
        .into_iter()
        .find(|b| !b.pass)
    {
        return Err(Error::Structural(format!(
            "{} exceeds its declared bound {} (observed {})",
            b.coefficient, b.declared, b.observed
        )));
    }
    let lip = validate_driver_lipschitz(
        &spec.driver,
        &spec.domain,
        spec.horizon,
        spec.noise_dim,
        VALIDATION_SAMPLES,
        VALIDATION_SEED,
    );
    if !lip.pass {
        return Err(Error::Structural(format!(
            "driver violates its Lipschitz constant {} (observed {})",
            lip.declared, lip.max_observed_ratio
        )));
    }
    Ok(())
}

/// Runs the grid solver and the regression Monte Carlo solver on `spec` and
/// compares them on `ts × xs`. `budget = None` runs the refinement study of
/// [`pde_error_budget`] at `pde`.
pub fn verify_feynman_kac(
    spec: &ProblemSpec,
    ts: &[f64],
    xs: &[Vec<f64>],
    pde: &PdeConfig,
    mc: &McConfig,
    picard: &PicardConfig,
    budget: Option<f64>,
) -> Result<CorrespondenceReport> {
    if ts.is_empty() || xs.is_empty() {
        return Err(Error::InvalidInput("correspondence grid is empty".into()));
    }
    if let Some(t) = ts.iter().find(|t| !(**t >= 0.0 && **t <= spec.horizon)) {
        return Err(Error::Domain(format!("time {t} outside [0, {}]", spec.horizon)));
    }
    validate_for_correspondence(spec)?;
    let budget = match budget {
        Some(b) if b >= 0.0 => b,
        Some(b) => return Err(Error::InvalidInput(format!("PDE budget must be nonnegative, got {b}"))),
        None => pde_error_budget(spec, pde, picard)?,
    };
    let sol = solve_backward_semilinear_pde(spec, pde, picard)?;
    let field = estimate_value_field(spec, ts, xs, mc, picard)?;
    let mut points = Vec::with_capacity(field.points.len());
    for vp in &field.points {
        let u_pde = sol.u.value_at(vp.t, &vp.x);
        let discrepancy = (u_pde - vp.value).abs();
        let tolerance = 3.0 * vp.stderr + budget;
        let oracle = spec.oracle.as_ref().map(|o| o.eval(vp.t, &vp.x));
        points.push(PointComparison {
            t: vp.t,
            x: vp.x.clone(),
            u_pde,
            u_mc: vp.value,
            stderr: vp.stderr,
            discrepancy,
            tolerance,
            pass: discrepancy <= tolerance,
            oracle,
            pde_oracle_deviation: oracle.map(|o| (u_pde - o).abs()),
            mc_oracle_deviation: oracle.map(|o| (vp.value - o).abs()),
            mc_iterations: vp.picard_iterations,
        });
    }
    let max_normalized_discrepancy = points.iter().fold(0.0f64, |m, p| {
        m.max(match (p.discrepancy, p.tolerance) {
            (0.0, _) => 0.0,
            (_, 0.0) => f64::INFINITY,
            (d, t) => d / t,
        })
    });
    Ok(CorrespondenceReport {
        spec: spec.name.clone(),
        ts: ts.to_vec(),
        xs: xs.to_vec(),
        pde_budget: budget,
        pass: points.iter().all(|p| p.pass),
        points,
        max_normalized_discrepancy,
        pde_iterations: sol.iterations,
        pde_picard: sol.picard,
    })
}
