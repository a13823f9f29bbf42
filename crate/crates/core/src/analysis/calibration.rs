//! Numeric stand-ins for the generic constants of the estimates, fitted on a
//! problem family and persisted to a versioned JSON file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::estimates::{bound_sides, lambda_energy_check, BoundMode, Constants};
use crate::bsde::PicardConfig;
use crate::error::{Error, Result};
use crate::pde::{solve_backward_semilinear_pde, GridFunction, PdeConfig};
use crate::problem::{validate_driver_lipschitz, ProblemSpec};

pub const FILE_VERSION: u32 = 1;
/// Multiplier applied to every fitted constant.
pub const HEADROOM: f64 = 1.2;
const LIPSCHITZ_SAMPLES: usize = 4_000;
const C1_SCAN_MAX: f64 = 1024.0;

/// `"d,d',K1,T,L,p"`
pub fn calibration_key(d: usize, dp: usize, k1: f64, horizon: f64, lipschitz: f64, p: f64) -> String {
    format!("{d},{dp},{k1},{horizon},{lipschitz},{p}")
}

/// Key of a family: the largest of each parameter, `p` of the first spec.
pub fn family_key(family: &[ProblemSpec]) -> String {
    let max = |f: &dyn Fn(&ProblemSpec) -> f64| family.iter().map(f).fold(0.0, f64::max);
    calibration_key(
        family.iter().map(|s| s.dim).max().unwrap_or(0),
        family.iter().map(|s| s.noise_dim).max().unwrap_or(0),
        max(&|s| s.k1()),
        max(&|s| s.horizon),
        max(&|s| s.driver.lipschitz()),
        family.first().map_or(2.0, |s| s.sobolev_p),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub key: String,
    pub family: Vec<String>,
    pub constants: Constants,
    /// Per-spec ratios behind the constants, before headroom.
    pub required: BTreeMap<String, Constants>,
    /// `2 max |u_h − u_{2h}|` over the inner half of each box.
    pub pde_budgets: BTreeMap<String, f64>,
    pub pde: PdeConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub version: u32,
    pub entries: BTreeMap<String, Calibration>,
}

impl CalibrationFile {
    /// A missing file reads as empty.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self {
                version: FILE_VERSION,
                entries: BTreeMap::new(),
            });
        }
        let f: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if f.version != FILE_VERSION {
            return Err(Error::InvalidInput(format!(
                "calibration file version {} is not {FILE_VERSION}",
                f.version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn insert(&mut self, c: Calibration) {
        self.version = FILE_VERSION;
        self.entries.insert(c.key.clone(), c);
    }

    pub fn get(&self, key: &str) -> Option<&Calibration> {
        self.entries.get(key)
    }
}

fn ratio(spec: &ProblemSpec, what: &str, lhs: f64, data: f64) -> Result<f64> {
    if !lhs.is_finite() || !data.is_finite() {
        return Err(Error::CalibrationFailure(format!(
            "{what} on '{}' is not finite",
            spec.name
        )));
    }
    if data <= 0.0 {
        if lhs <= 1e-12 {
            return Ok(0.0);
        }
        return Err(Error::CalibrationFailure(format!(
            "{what} on '{}' is unbounded: left side {lhs:e} with zero data",
            spec.name
        )));
    }
    Ok(lhs / data)
}

fn energy_passes(u: &GridFunction, q: &GridFunction, spec: &ProblemSpec, c: f64) -> Result<bool> {
    for m in [0, 1] {
        if !lambda_energy_check(u, q, spec, None, c + 2.0, c, m)?.pass {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Smallest `C >= 0` for which the energy inequality holds at `λ = C + 2`
/// in both orders 0 and 1: doubling scan, then bisection.
fn required_c1(u: &GridFunction, q: &GridFunction, spec: &ProblemSpec) -> Result<f64> {
    if energy_passes(u, q, spec, 0.0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while !energy_passes(u, q, spec, hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > C1_SCAN_MAX {
            return Err(Error::CalibrationFailure(format!(
                "energy inequality on '{}' fails for every C₁ up to {C1_SCAN_MAX}",
                spec.name
            )));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if energy_passes(u, q, spec, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `2 max |u_h − u_{2h}|` with the coarse run on `(2h, 2Δt)`, compared at the
/// coarse nodes with `|x|_∞ <= R/2`.
pub fn pde_error_budget(spec: &ProblemSpec, cfg: &PdeConfig, picard: &PicardConfig) -> Result<f64> {
    let fine = solve_backward_semilinear_pde(spec, cfg, picard)?.u;
    let coarse_cfg = PdeConfig {
        h: 2.0 * cfg.h,
        n_steps: cfg.n_steps.div_ceil(2),
        ..*cfg
    };
    let coarse = solve_backward_semilinear_pde(spec, &coarse_cfg, picard)?.u;
    let half = 0.5 * spec.domain.radius;
    let mut worst = 0.0f64;
    for k in 0..coarse.n_times() {
        let t = coarse.time.node(k);
        for idx in 0..coarse.space.len() {
            let x = coarse.space.point(idx);
            if x.iter().all(|v| v.abs() <= half) {
                worst = worst.max((fine.value_at(t, &x) - coarse.slice(k)[idx]).abs());
            }
        }
    }
    Ok(2.0 * worst)
}

/// Fits each constant as `max(1, 1.2 × largest required value)` over the
/// family. Constants can only grow when specs are added.
pub fn calibrate_constants(family: &[ProblemSpec], cfg: &PdeConfig, picard: &PicardConfig) -> Result<Calibration> {
    if family.is_empty() {
        return Err(Error::InvalidInput("calibration family is empty".into()));
    }
    let mut required = BTreeMap::new();
    let mut budgets = BTreeMap::new();
    let mut fitted = Constants::default();
    for (i, spec) in family.iter().enumerate() {
        let lip = validate_driver_lipschitz(
            &spec.driver,
            &spec.domain,
            spec.horizon,
            spec.noise_dim,
            LIPSCHITZ_SAMPLES,
            crate::seed::split(0xCA1B, i as u64),
        );
        if !lip.pass {
            return Err(Error::CalibrationFailure(format!(
                "driver of '{}' violates its declared Lipschitz constant {} (observed {})",
                spec.name, lip.declared, lip.max_observed_ratio
            )));
        }
        if !spec.is_deterministic() {
            return Err(Error::CalibrationFailure(format!(
                "'{}' has random coefficients; calibration runs on the grid solver",
                spec.name
            )));
        }
        let u = solve_backward_semilinear_pde(spec, cfg, picard)?.u;
        let q = u.qhat(spec);
        let mut need = Constants {
            c1: required_c1(&u, &q, spec)?,
            ..Constants::default()
        };
        let (l, d) = bound_sides(&u, &q, spec, BoundMode::EstSl)?;
        need.est_sl = ratio(spec, "est:sl ratio", l, d)?;
        let (l, d) = bound_sides(&u, &q, spec, BoundMode::Lp)?;
        need.lp = ratio(spec, "L^p ratio", l, d)?;
        let (l, d) = bound_sides(&u, &q, spec, BoundMode::Sup)?;
        need.sup = ratio(spec, "sup ratio", l, d)?;
        let grow = |c: &mut f64, r: f64| *c = c.max(HEADROOM * r);
        grow(&mut fitted.c1, need.c1);
        grow(&mut fitted.est_sl, need.est_sl);
        grow(&mut fitted.lp, need.lp);
        grow(&mut fitted.sup, need.sup);
        required.insert(spec.name.clone(), need);
        budgets.insert(spec.name.clone(), pde_error_budget(spec, cfg, picard)?);
    }
    Ok(Calibration {
        key: family_key(family),
        family: family.iter().map(|s| s.name.clone()).collect(),
        constants: fitted,
        required,
        pde_budgets: budgets,
        pde: *cfg,
    })
}
