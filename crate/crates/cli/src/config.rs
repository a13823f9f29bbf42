//! Run configuration: a TOML file with one section per concern. Unknown keys
//! are rejected; [`RunConfig::resolve`] fills every default so the echoed
//! file re-runs to the same results.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fkverify::analysis::CalibrationFile;
use fkverify::bsde::{McConfig, NestedConfig, PicardConfig, RegressionBasis};
use fkverify::pde::{PdeConfig, DEFAULT_SCHEDULE};
use fkverify::problem::{
    builtin, validate_parabolicity, CoefficientField, DriverFunction, Oracle, ProblemSpec, ScalarField, Shape,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::expr::Expr;

/// Largest dimension accepted for inline problems.
pub const MAX_INLINE_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Parabolicity,
    Lipschitz,
    Energy,
    Picard,
    Viscosity,
    Refinement,
    Correspondence,
    Mollification,
    Flow,
    Continuity,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Parabolicity => "parabolicity",
            Check::Lipschitz => "lipschitz",
            Check::Energy => "energy",
            Check::Picard => "picard",
            Check::Viscosity => "viscosity",
            Check::Refinement => "refinement",
            Check::Correspondence => "correspondence",
            Check::Mollification => "mollification",
            Check::Flow => "flow",
            Check::Continuity => "continuity",
        }
    }

    /// Checks that run the grid solver and so need deterministic
    /// coefficients.
    pub fn needs_grid(self) -> bool {
        matches!(
            self,
            Check::Energy | Check::Picard | Check::Viscosity | Check::Refinement | Check::Correspondence
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub picard: PicardSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub mollification: MollificationSection,
    #[serde(default)]
    pub continuity: ContinuitySection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub builtin: Option<String>,
    pub inline: Option<InlineProblem>,
}

/// Coefficients as expression strings over `t`, `x1..xd` (`x` when `d = 1`)
/// and the path channel `w`. The driver also sees `u` and `z1..zd'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub name: String,
    pub dim: usize,
    pub noise_dim: Option<usize>,
    pub horizon: Option<f64>,
    pub radius: Option<f64>,
    /// `d × d'`, row by row.
    pub sigma: Option<Vec<Vec<String>>>,
    /// `d × d`; defaults to `½ σσᵀ`.
    pub a: Option<Vec<Vec<String>>>,
    pub b: Option<Vec<String>>,
    pub c: Option<String>,
    pub nu: Option<Vec<String>>,
    pub driver: Option<String>,
    /// Declared Lipschitz constant of the driver in `(u, z)`.
    pub lipschitz: Option<f64>,
    pub terminal: String,
    pub oracle: Option<String>,
    pub sobolev_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub h: f64,
    pub n_steps: usize,
    pub epsilon: f64,
    /// Viscosity schedule, strictly decreasing.
    pub schedule: Vec<f64>,
    /// Grid levels of the refinement study, each halving `h` and `Δt`.
    pub refinement_levels: usize,
}

impl Default for PdeSection {
    fn default() -> Self {
        let d = PdeConfig::default();
        Self {
            h: d.h,
            n_steps: d.n_steps,
            epsilon: d.epsilon,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            refinement_levels: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSection {
    pub tol: f64,
    pub max_iters: usize,
    /// Calibrated `C₁`; unset means the relaxed ratio threshold.
    pub c1: Option<f64>,
}

impl Default for PicardSection {
    fn default() -> Self {
        let d = PicardConfig::default();
        Self {
            tol: d.tol,
            max_iters: d.max_iters,
            c1: d.c1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub basis: Option<RegressionBasis>,
}

impl Default for McSection {
    fn default() -> Self {
        let d = McConfig::default();
        Self {
            n_paths: d.n_paths,
            n_steps: d.n_steps,
            seed: d.seed,
            basis: d.basis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRef {
    pub file: PathBuf,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub checks: Vec<Check>,
    /// Times of the correspondence grid.
    pub ts: Vec<f64>,
    /// Points of the correspondence grid; one per row.
    pub xs: Option<Vec<Vec<f64>>>,
    /// Fixed PDE error budget; unset runs the refinement study.
    pub pde_budget: Option<f64>,
    /// `C₁` for the energy check, or a calibration entry to read it from.
    pub c1: Option<f64>,
    pub calibration: Option<CalibrationRef>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            checks: vec![Check::Parabolicity, Check::Lipschitz, Check::Correspondence],
            ts: vec![0.0, 0.25, 0.5],
            xs: None,
            pde_budget: None,
            c1: None,
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollificationSection {
    pub epsilons: Vec<f64>,
    pub t: f64,
    pub x: Option<Vec<f64>>,
}

impl Default for MollificationSection {
    fn default() -> Self {
        Self {
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            t: 0.0,
            x: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuitySection {
    pub t: f64,
    pub x: Option<Vec<f64>>,
    /// Rows `[Δt, Δx_1, .., Δx_d]`.
    pub offsets: Option<Vec<Vec<f64>>>,
}

impl Default for ContinuitySection {
    fn default() -> Self {
        Self {
            t: 0.0,
            x: None,
            offsets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub t: f64,
    pub x: Option<Vec<f64>>,
    pub s: f64,
    pub outer_samples: usize,
    pub nested_paths: usize,
    pub cost_cap: u64,
    pub max_residual: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        let n = NestedConfig::default();
        Self {
            t: 0.0,
            x: None,
            s: 0.5,
            outer_samples: n.outer_samples,
            nested_paths: n.nested_paths,
            cost_cap: n.cost_cap,
            max_residual: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn pde_config(&self) -> PdeConfig {
        PdeConfig {
            h: self.pde.h,
            n_steps: self.pde.n_steps,
            epsilon: self.pde.epsilon,
        }
    }

    pub fn picard_config(&self) -> PicardConfig {
        PicardConfig {
            tol: self.picard.tol,
            max_iters: self.picard.max_iters,
            c1: self.picard.c1,
        }
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            n_paths: self.mc.n_paths,
            n_steps: self.mc.n_steps,
            seed: self.mc.seed,
            basis: self.mc.basis,
            ..McConfig::default()
        }
    }

    pub fn nested_config(&self) -> NestedConfig {
        NestedConfig {
            outer_samples: self.flow.outer_samples,
            nested_paths: self.flow.nested_paths,
            cost_cap: self.flow.cost_cap,
        }
    }

    /// Builds the problem, validates every section against it and fills all
    /// defaults. Nothing expensive runs before this returns.
    pub fn resolve(&mut self) -> Result<ProblemSpec> {
        let spec = self.build_problem()?;
        self.validate_numbers()?;
        self.validate_against(&spec)?;
        let d = spec.dim;
        if let Some(p) = self.problem.inline.as_mut() {
            fill_inline_defaults(p, &spec);
        }
        if self.mc.basis.is_none() {
            let features = d + usize::from(!spec.is_deterministic());
            self.mc.basis = Some(RegressionBasis::default_for(features));
        }
        if self.verify.xs.is_none() {
            self.verify.xs = Some(
                [-1.0, 0.0, 1.0]
                    .iter()
                    .map(|v| {
                        let mut x = vec![0.0; d];
                        x[0] = *v;
                        x
                    })
                    .collect(),
            );
        }
        self.mollification.x.get_or_insert_with(|| vec![0.0; d]);
        self.flow.x.get_or_insert_with(|| vec![0.0; d]);
        self.continuity.x.get_or_insert_with(|| vec![1.0; d]);
        if self.continuity.offsets.is_none() {
            let dt = spec.horizon / self.mc.n_steps as f64;
            let mut rows = Vec::new();
            for s in [0.05, 0.1, 0.2, 0.4] {
                let mut r = vec![0.0; d + 1];
                r[1] = s;
                rows.push(r);
            }
            for k in [1, 2, 4] {
                let mut r = vec![0.0; d + 1];
                r[0] = (k * (self.mc.n_steps / 20).max(1)) as f64 * dt;
                rows.push(r);
            }
            self.continuity.offsets = Some(rows);
        }
        self.verify.checks.sort();
        self.verify.checks.dedup();
        Ok(spec)
    }

    fn build_problem(&self) -> Result<ProblemSpec> {
        let spec = match (&self.problem.builtin, &self.problem.inline) {
            (Some(name), None) => builtin(name).map_err(|e| CliError::config("problem.builtin", e.to_string()))?,
            (None, Some(p)) => build_inline(p)?,
            _ => {
                return Err(CliError::config(
                    "problem",
                    "give exactly one of `builtin` or an `[problem.inline]` table",
                ))
            }
        };
        let par = validate_parabolicity(&spec, 2_000, fkverify::seed::split_str(self.mc.seed, "parabolicity"))
            .map_err(|e| CliError::config("problem", e.to_string()))?;
        if !par.pass {
            return Err(CliError::config(
                "problem",
                format!(
                    "parabolicity precheck failed: 2a - σσᵀ has eigenvalue {:e} at t = {}, x = {:?}",
                    par.min_margin, par.worst_t, par.worst_x
                ),
            ));
        }
        Ok(spec)
    }

    fn validate_numbers(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(field, format!("must be positive, got {v}")))
            }
        };
        let at_least = |field: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(CliError::config(field, format!("must be at least {min}, got {v}")))
            }
        };
        positive("pde.h", self.pde.h)?;
        at_least("pde.n_steps", self.pde.n_steps, 1)?;
        at_least("pde.refinement_levels", self.pde.refinement_levels, 2)?;
        if !(self.pde.epsilon >= 0.0) {
            return Err(CliError::config("pde.epsilon", "must be nonnegative"));
        }
        let sched = &self.pde.schedule;
        if sched.len() < 2 || sched.windows(2).any(|w| !(w[0] > w[1])) || sched.iter().any(|e| !(*e >= 0.0)) {
            return Err(CliError::config(
                "pde.schedule",
                "needs at least two strictly decreasing nonnegative values",
            ));
        }
        positive("picard.tol", self.picard.tol)?;
        at_least("picard.max_iters", self.picard.max_iters, 1)?;
        if let Some(c) = self.picard.c1 {
            if !(c >= 0.0) {
                return Err(CliError::config("picard.c1", "must be nonnegative"));
            }
        }
        at_least("mc.n_paths", self.mc.n_paths, 2)?;
        at_least("mc.n_steps", self.mc.n_steps, 1)?;
        let eps = &self.mollification.epsilons;
        if eps.len() < 2 || eps.windows(2).any(|w| !(w[0] > w[1])) || eps.iter().any(|e| !(*e > 0.0)) {
            return Err(CliError::config(
                "mollification.epsilons",
                "needs at least two strictly decreasing positive values",
            ));
        }
        at_least("flow.outer_samples", self.flow.outer_samples, 1)?;
        at_least("flow.nested_paths", self.flow.nested_paths, 2)?;
        positive("flow.max_residual", self.flow.max_residual)?;
        if let Some(b) = self.verify.pde_budget {
            if !(b >= 0.0) {
                return Err(CliError::config("verify.pde_budget", "must be nonnegative"));
            }
        }
        Ok(())
    }

    fn validate_against(&self, spec: &ProblemSpec) -> Result<()> {
        let d = spec.dim;
        let point = |field: &str, x: &[f64]| {
            if x.len() != d {
                return Err(CliError::config(
                    field,
                    format!("expected {d} coordinates, got {}", x.len()),
                ));
            }
            if !spec.domain.contains(x) {
                return Err(CliError::config(
                    field,
                    format!("{x:?} lies outside the box of radius {}", spec.domain.radius),
                ));
            }
            Ok(())
        };
        let time = |field: &str, t: f64, strict: bool| {
            let ok = t >= 0.0 && if strict { t < spec.horizon } else { t <= spec.horizon };
            if ok {
                Ok(())
            } else {
                Err(CliError::config(
                    field,
                    format!("time {t} outside [0, {}]", spec.horizon),
                ))
            }
        };
        for c in &self.verify.checks {
            if c.needs_grid() && !spec.is_deterministic() {
                return Err(CliError::config(
                    "verify.checks",
                    format!(
                        "'{}' needs deterministic coefficients; '{}' reads the path channel",
                        c.name(),
                        spec.name
                    ),
                ));
            }
            if c.needs_grid() && d > 2 {
                return Err(CliError::config(
                    "verify.checks",
                    format!("'{}' runs the grid solver, which supports d <= 2", c.name()),
                ));
            }
        }
        let wants = |c: Check| self.verify.checks.contains(&c);
        if wants(Check::Refinement) && spec.oracle.is_none() {
            return Err(CliError::config(
                "verify.checks",
                format!("'refinement' needs an oracle; '{}' has none", spec.name),
            ));
        }
        if wants(Check::Energy) {
            self.energy_c1()?;
        }
        if wants(Check::Correspondence) {
            if self.verify.ts.is_empty() {
                return Err(CliError::config("verify.ts", "is empty"));
            }
            for t in &self.verify.ts {
                time("verify.ts", *t, false)?;
            }
            if let Some(xs) = &self.verify.xs {
                if xs.is_empty() {
                    return Err(CliError::config("verify.xs", "is empty"));
                }
                for x in xs {
                    point("verify.xs", x)?;
                }
            }
        }
        if wants(Check::Mollification) {
            time("mollification.t", self.mollification.t, true)?;
            if let Some(x) = &self.mollification.x {
                point("mollification.x", x)?;
            }
        }
        if wants(Check::Flow) {
            time("flow.t", self.flow.t, true)?;
            if !(self.flow.s > self.flow.t && self.flow.s < spec.horizon) {
                return Err(CliError::config("flow.s", "must satisfy t < s < T"));
            }
            if let Some(x) = &self.flow.x {
                point("flow.x", x)?;
            }
        }
        if wants(Check::Continuity) {
            time("continuity.t", self.continuity.t, true)?;
            if let Some(x) = &self.continuity.x {
                point("continuity.x", x)?;
            }
            if let Some(rows) = &self.continuity.offsets {
                if rows.is_empty() || rows.iter().any(|r| r.len() != d + 1) {
                    return Err(CliError::config(
                        "continuity.offsets",
                        format!("needs rows [dt, dx_1..dx_{d}]"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `C₁` for the energy check: explicit, else read from the calibration
    /// file.
    pub fn energy_c1(&self) -> Result<f64> {
        if let Some(c) = self.verify.c1 {
            if !(c >= 0.0) {
                return Err(CliError::config("verify.c1", "must be nonnegative"));
            }
            return Ok(c);
        }
        let Some(r) = &self.verify.calibration else {
            return Err(CliError::config(
                "verify",
                "the energy check needs `c1` or a `calibration` entry; run `fkverify calibrate` first",
            ));
        };
        let file =
            CalibrationFile::load(&r.file).map_err(|e| CliError::config("verify.calibration.file", e.to_string()))?;
        file.get(&r.key).map(|c| c.constants.c1).ok_or_else(|| {
            CliError::config(
                "verify.calibration.key",
                format!("no entry '{}' in {}", r.key, r.file.display()),
            )
        })
    }
}

/// Variable names and a slot map for `d` space dimensions and, for drivers,
/// `d'` noise dimensions. With `d = 1` the name `x` aliases `x1` through an
/// extra trailing slot.
struct Slots {
    names: Vec<String>,
    dim: usize,
}

impl Slots {
    fn field(dim: usize) -> Self {
        let mut names = vec!["t".to_string()];
        names.extend((1..=dim).map(|i| format!("x{i}")));
        names.push("w".into());
        if dim == 1 {
            names.push("x".into());
        }
        Self { names, dim }
    }

    fn driver(dim: usize, noise_dim: usize) -> Self {
        let mut names = vec!["t".to_string()];
        names.extend((1..=dim).map(|i| format!("x{i}")));
        names.push("w".into());
        names.push("u".into());
        names.extend((1..=noise_dim).map(|i| format!("z{i}")));
        if dim == 1 {
            names.push("x".into());
        }
        Self { names, dim }
    }

    fn parse(&self, field: &str, src: &str) -> Result<Expr> {
        let names: Vec<&str> = self.names.iter().map(String::as_str).collect();
        Expr::parse(src, &names).map_err(|source| CliError::Expr {
            field: field.to_string(),
            source,
        })
    }

    fn w_slot(&self) -> usize {
        self.dim + 1
    }
}

const ENV: usize = 2 * MAX_INLINE_DIM + 4;

fn fill_env(env: &mut [f64; ENV], dim: usize, t: f64, x: &[f64], w: f64) -> usize {
    env[0] = t;
    env[1..=dim].copy_from_slice(x);
    env[dim + 1] = w;
    dim + 2
}

fn scalar_field(slots: &Slots, field: &str, src: &str) -> Result<(ScalarField, bool)> {
    let e = slots.parse(field, src)?;
    if let Some(v) = e.as_constant() {
        return Ok((ScalarField::constant(v), true));
    }
    let smooth = e.is_smooth();
    let uses_w = e.uses_any(slots.w_slot()..slots.w_slot() + 1);
    let d = slots.dim;
    let e = Arc::new(e);
    let f = ScalarField::new(move |t, x, w| {
        let mut env = [0.0; ENV];
        let n = fill_env(&mut env, d, t, x, w);
        if d == 1 {
            env[n] = x[0];
        }
        e.eval(&env)
    });
    Ok((if uses_w { f.path_dependent() } else { f }, smooth))
}

fn coefficient(slots: &Slots, field: &str, shape: Shape, rows: &[Vec<String>]) -> Result<CoefficientField> {
    let (r, c) = shape.rows_cols();
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(CliError::config(field, format!("expected {r} × {c} entries")));
    }
    let mut comps = Vec::with_capacity(r * c);
    let mut consts = Vec::with_capacity(r * c);
    let mut smooth = true;
    for (i, row) in rows.iter().enumerate() {
        for (j, src) in row.iter().enumerate() {
            let (f, s) = scalar_field(slots, &format!("{field}[{i}][{j}]"), src)?;
            smooth &= s;
            consts.push(f.as_constant());
            comps.push(f);
        }
    }
    if let Some(values) = consts.into_iter().collect::<Option<Vec<f64>>>() {
        return Ok(CoefficientField::constant(shape, &values));
    }
    let f = CoefficientField::new(shape, comps);
    Ok(if smooth { f } else { f.with_smoothness(1) })
}

fn column(v: &[String]) -> Vec<Vec<String>> {
    v.iter().map(|s| vec![s.clone()]).collect()
}

fn build_inline(p: &InlineProblem) -> Result<ProblemSpec> {
    let d = p.dim;
    let dp = p.noise_dim.unwrap_or(d);
    if d == 0 || d > MAX_INLINE_DIM || dp == 0 || dp > MAX_INLINE_DIM {
        return Err(CliError::config(
            "problem.inline",
            format!("dimensions must lie in 1..={MAX_INLINE_DIM}, got d = {d}, d' = {dp}"),
        ));
    }
    let slots = Slots::field(d);
    let mut b = ProblemSpec::builder(p.name.clone(), d, dp);
    if let Some(h) = p.horizon {
        b = b.horizon(h);
    }
    if let Some(r) = p.radius {
        b = b.radius(r);
    }
    if let Some(s) = p.sobolev_p {
        b = b.sobolev_p(s);
    }
    if let Some(s) = &p.sigma {
        b = b.sigma(coefficient(&slots, "problem.inline.sigma", Shape::Matrix(d, dp), s)?);
    }
    if let Some(a) = &p.a {
        b = b.a(coefficient(&slots, "problem.inline.a", Shape::Matrix(d, d), a)?);
    }
    if let Some(v) = &p.b {
        b = b.b(coefficient(&slots, "problem.inline.b", Shape::Vector(d), &column(v))?);
    }
    if let Some(c) = &p.c {
        b = b.c(coefficient(
            &slots,
            "problem.inline.c",
            Shape::Scalar,
            &[vec![c.clone()]],
        )?);
    }
    if let Some(v) = &p.nu {
        b = b.nu(coefficient(&slots, "problem.inline.nu", Shape::Vector(dp), &column(v))?);
    }
    b = b.terminal(scalar_field(&slots, "problem.inline.terminal", &p.terminal)?.0);
    if let Some(src) = &p.driver {
        b = b.driver(driver(d, dp, src, p.lipschitz)?);
    }
    if let Some(src) = &p.oracle {
        let e = Arc::new(Slots::field(d).parse("problem.inline.oracle", src)?);
        if e.uses_any(slots.w_slot()..slots.w_slot() + 1) {
            return Err(CliError::config("problem.inline.oracle", "an oracle cannot read w"));
        }
        b = b.oracle(Oracle::new(src.clone(), move |t, x| {
            let mut env = [0.0; ENV];
            let n = fill_env(&mut env, d, t, x, 0.0);
            if d == 1 {
                env[n] = x[0];
            }
            e.eval(&env)
        }));
    }
    b.build().map_err(|e| CliError::config("problem.inline", e.to_string()))
}

fn driver(d: usize, dp: usize, src: &str, lipschitz: Option<f64>) -> Result<DriverFunction> {
    let slots = Slots::driver(d, dp);
    let e = slots.parse("problem.inline.driver", src)?;
    let w = d + 1;
    let (uses_u, uses_z, uses_w) = (
        e.uses_any(w + 1..w + 2),
        e.uses_any(w + 2..w + 2 + dp),
        e.uses_any(w..w + 1),
    );
    if e.as_constant() == Some(0.0) {
        return Ok(DriverFunction::zero());
    }
    let lip = lipschitz.unwrap_or(0.0);
    if !(lip >= 0.0) {
        return Err(CliError::config("problem.inline.lipschitz", "must be nonnegative"));
    }
    if (uses_u || uses_z) && lipschitz.is_none() {
        return Err(CliError::config(
            "problem.inline.lipschitz",
            "a driver that reads u or z needs a declared Lipschitz constant",
        ));
    }
    let e = Arc::new(e);
    let f = move |t: f64, x: &[f64], wv: f64, v: f64, r: &[f64]| {
        let mut env = [0.0; ENV];
        let n = fill_env(&mut env, d, t, x, wv);
        env[n] = v;
        env[n + 1..n + 1 + dp].copy_from_slice(r);
        if d == 1 {
            env[n + 1 + dp] = x[0];
        }
        e.eval(&env)
    };
    if !uses_u && !uses_z {
        let src_field = ScalarField::new(move |t, x, wv| f(t, x, wv, 0.0, &[0.0; MAX_INLINE_DIM][..dp]));
        let src_field = if uses_w { src_field.path_dependent() } else { src_field };
        return Ok(DriverFunction::source(src_field));
    }
    Ok(DriverFunction::general(f, lip, uses_u, uses_z, uses_w))
}

/// Writes the implied defaults back into an inline problem so the echo is
/// complete.
fn fill_inline_defaults(p: &mut InlineProblem, spec: &ProblemSpec) {
    let (d, dp) = (spec.dim, spec.noise_dim);
    p.noise_dim = Some(dp);
    p.horizon = Some(spec.horizon);
    p.radius = Some(spec.domain.radius);
    p.sobolev_p = Some(spec.sobolev_p);
    let sigma = p
        .sigma
        .get_or_insert_with(|| vec![vec!["0".to_string(); dp]; d])
        .clone();
    p.a.get_or_insert_with(|| {
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let terms: Vec<String> = (0..dp)
                            .map(|k| format!("({})*({})", sigma[i][k], sigma[j][k]))
                            .collect();
                        format!("0.5*({})", terms.join(" + "))
                    })
                    .collect()
            })
            .collect()
    });
    p.b.get_or_insert_with(|| vec!["0".to_string(); d]);
    p.c.get_or_insert_with(|| "0".to_string());
    p.nu.get_or_insert_with(|| vec!["0".to_string(); dp]);
    p.driver.get_or_insert_with(|| "0".to_string());
    p.lipschitz.get_or_insert(spec.driver.lipschitz());
}
