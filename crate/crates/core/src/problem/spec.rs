use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::driver::DriverFunction;
use super::field::{CoefficientField, ScalarField, Shape};
use crate::error::{Error, Result};

/// Axis-aligned truncation box `[-R, R]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainBox {
    pub dim: usize,
    pub radius: f64,
}

impl DomainBox {
    pub fn new(dim: usize, radius: f64) -> Self {
        Self { dim, radius }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.radius)
    }

    /// Clamps `x` into the box; returns true if any coordinate moved.
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for v in x.iter_mut() {
            if *v > self.radius {
                *v = self.radius;
                moved = true;
            } else if *v < -self.radius {
                *v = -self.radius;
                moved = true;
            }
        }
        moved
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.random_range(-self.radius..=self.radius);
        }
    }
}

type OracleFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Closed-form reference solution `u(t, x)` with a printable formula.
#[derive(Clone)]
pub struct Oracle {
    pub formula: String,
    f: OracleFn,
}

impl Oracle {
    pub fn new<F>(formula: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            formula: formula.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        (self.f)(t, x)
    }
}

impl fmt::Debug for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Oracle({})", self.formula)
    }
}

/// A complete FBSDE / backward PDE instance:
///
/// ```text
/// du = -[a^{ij} u_ij + b^i u_i + c u + ν·q̂ + f(t, x, u, q̂)] dt + q dW,  u(T) = φ
/// dX = b dt + σ dW,   dY = -[c Y + ν·Z + f(s, X, Y, Z)] ds + Z dW,  Y_T = φ(X_T)
/// ```
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub noise_dim: usize,
    pub horizon: f64,
    /// `d × d`
    pub a: CoefficientField,
    /// `d`
    pub b: CoefficientField,
    /// scalar
    pub c: CoefficientField,
    /// `d × d'`
    pub sigma: CoefficientField,
    /// `d'`
    pub nu: CoefficientField,
    pub driver: DriverFunction,
    pub terminal: ScalarField,
    pub domain: DomainBox,
    pub sobolev_p: f64,
    pub oracle: Option<Oracle>,
}

impl ProblemSpec {
    pub fn builder(name: impl Into<String>, dim: usize, noise_dim: usize) -> ProblemBuilder {
        ProblemBuilder {
            name: name.into(),
            dim,
            noise_dim,
            horizon: 1.0,
            a: None,
            b: None,
            c: None,
            sigma: None,
            nu: None,
            driver: DriverFunction::zero(),
            terminal: ScalarField::zero(),
            radius: None,
            sobolev_p: 2.0,
            oracle: None,
        }
    }

    /// True when every coefficient, the driver and the terminal condition
    /// ignore the path channel. Only these specs go to the grid solver.
    pub fn is_deterministic(&self) -> bool {
        self.a.is_deterministic()
            && self.b.is_deterministic()
            && self.c.is_deterministic()
            && self.sigma.is_deterministic()
            && self.nu.is_deterministic()
            && !self.driver.uses_path()
            && !self.terminal.uses_path()
    }

    /// Largest declared coefficient bound, the `K_1` of the hypotheses.
    pub fn k1(&self) -> f64 {
        [&self.a, &self.b, &self.c, &self.sigma, &self.nu]
            .iter()
            .map(|f| f.bound())
            .fold(0.0, f64::max)
    }

    /// `σ(t, x) ν(t, x)`: the effective extra drift the `ν·q̂` term puts on
    /// the grid operator when `q̂ = σᵀ u_x`.
    pub fn sigma_nu(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (d, dp) = (self.dim, self.noise_dim);
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..dp)
                .map(|k| self.sigma.entry(i, k).eval(t, x, 0.0) * self.nu.entry(k, 0).eval(t, x, 0.0))
                .sum();
        }
    }

    /// Returns a copy with a different truncation radius.
    pub fn with_radius(&self, radius: f64) -> Self {
        let mut s = self.clone();
        s.domain = DomainBox::new(self.dim, radius);
        s
    }
}

pub struct ProblemBuilder {
    name: String,
    dim: usize,
    noise_dim: usize,
    horizon: f64,
    a: Option<CoefficientField>,
    b: Option<CoefficientField>,
    c: Option<CoefficientField>,
    sigma: Option<CoefficientField>,
    nu: Option<CoefficientField>,
    driver: DriverFunction,
    terminal: ScalarField,
    radius: Option<f64>,
    sobolev_p: f64,
    oracle: Option<Oracle>,
}

impl ProblemBuilder {
    pub fn horizon(mut self, t: f64) -> Self {
        self.horizon = t;
        self
    }
    /// Diffusion matrix; defaults to `½ σσᵀ` when unset.
    pub fn a(mut self, a: CoefficientField) -> Self {
        self.a = Some(a);
        self
    }
    pub fn b(mut self, b: CoefficientField) -> Self {
        self.b = Some(b);
        self
    }
    pub fn c(mut self, c: CoefficientField) -> Self {
        self.c = Some(c);
        self
    }
    pub fn sigma(mut self, s: CoefficientField) -> Self {
        self.sigma = Some(s);
        self
    }
    pub fn nu(mut self, nu: CoefficientField) -> Self {
        self.nu = Some(nu);
        self
    }
    pub fn driver(mut self, f: DriverFunction) -> Self {
        self.driver = f;
        self
    }
    pub fn terminal(mut self, phi: ScalarField) -> Self {
        self.terminal = phi;
        self
    }
    pub fn radius(mut self, r: f64) -> Self {
        self.radius = Some(r);
        self
    }
    pub fn sobolev_p(mut self, p: f64) -> Self {
        self.sobolev_p = p;
        self
    }
    pub fn oracle(mut self, o: Oracle) -> Self {
        self.oracle = Some(o);
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let (d, dp) = (self.dim, self.noise_dim);
        if d == 0 || dp == 0 {
            return Err(Error::Structural("dimensions d and d' must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.sobolev_p < 2.0 {
            return Err(Error::Domain(format!(
                "sobolev exponent p must be >= 2, got {}",
                self.sobolev_p
            )));
        }
        let sigma = self
            .sigma
            .unwrap_or_else(|| CoefficientField::zeros(Shape::Matrix(d, dp)));
        let a = match self.a {
            Some(a) => a,
            None => half_sigma_sigma_t(&sigma, d, dp),
        };
        let b = self.b.unwrap_or_else(|| CoefficientField::zeros(Shape::Vector(d)));
        let c = self.c.unwrap_or_else(|| CoefficientField::zeros(Shape::Scalar));
        let nu = self.nu.unwrap_or_else(|| CoefficientField::zeros(Shape::Vector(dp)));
        let check = |name: &str, f: &CoefficientField, want: Shape| -> Result<()> {
            let ok = f.shape() == want
                || (want == Shape::Vector(1) && f.shape() == Shape::Scalar)
                || (want == Shape::Scalar && f.shape() == Shape::Vector(1));
            if ok {
                Ok(())
            } else {
                Err(Error::Structural(format!(
                    "coefficient {name} has shape {:?}, expected {want:?}",
                    f.shape()
                )))
            }
        };
        check("a", &a, Shape::Matrix(d, d))?;
        check("b", &b, Shape::Vector(d))?;
        check("c", &c, Shape::Scalar)?;
        check("sigma", &sigma, Shape::Matrix(d, dp))?;
        check("nu", &nu, Shape::Vector(dp))?;
        let mut spec = ProblemSpec {
            name: self.name,
            dim: d,
            noise_dim: dp,
            horizon: self.horizon,
            a,
            b,
            c,
            sigma,
            nu,
            driver: self.driver,
            terminal: self.terminal,
            domain: DomainBox::new(d, 1.0),
            sobolev_p: self.sobolev_p,
            oracle: self.oracle,
        };
        spec.domain = match self.radius {
            Some(r) if r > 0.0 => DomainBox::new(d, r),
            Some(r) => return Err(Error::Domain(format!("radius must be positive, got {r}"))),
            None => DomainBox::new(d, crate::paths::preflight_radius(&spec, &vec![0.0; d], 0x5EED)?),
        };
        Ok(spec)
    }
}

/// `α = ½ σσᵀ` as a coefficient field.
pub fn half_sigma_sigma_t(sigma: &CoefficientField, d: usize, dp: usize) -> CoefficientField {
    let mut comps = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let si: Vec<ScalarField> = (0..dp).map(|k| sigma.entry(i, k).clone()).collect();
            let sj: Vec<ScalarField> = (0..dp).map(|k| sigma.entry(j, k).clone()).collect();
            let all_const = si.iter().chain(&sj).all(|f| f.as_constant().is_some());
            if all_const {
                let v: f64 = si
                    .iter()
                    .zip(&sj)
                    .map(|(p, q)| p.as_constant().unwrap() * q.as_constant().unwrap())
                    .sum::<f64>()
                    * 0.5;
                comps.push(ScalarField::constant(v));
            } else {
                let uses_path = si.iter().chain(&sj).any(|f| f.uses_path());
                let f = ScalarField::new(move |t, x, w| {
                    0.5 * si
                        .iter()
                        .zip(&sj)
                        .map(|(p, q)| p.eval(t, x, w) * q.eval(t, x, w))
                        .sum::<f64>()
                });
                comps.push(if uses_path { f.path_dependent() } else { f });
            }
        }
    }
    let kb = sigma.bound();
    CoefficientField::new(Shape::Matrix(d, d), comps)
        .with_bound(0.5 * dp as f64 * kb * kb)
        .with_smoothness(sigma.smoothness())
}
