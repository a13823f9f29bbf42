//! Built-in problem instances addressable by name.

use statrs::distribution::{ContinuousCDF, Normal};

use super::driver::DriverFunction;
use super::field::{CoefficientField, ScalarField, Shape};
use super::spec::{Oracle, ProblemSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub dim: usize,
    pub noise_dim: usize,
    pub deterministic: bool,
    pub oracle: &'static str,
    pub summary: &'static str,
}

const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "discount",
        dim: 1,
        noise_dim: 1,
        deterministic: true,
        oracle: "u(t,x) = exp(-(T - t))",
        summary: "sigma = 1, f(t,x,u) = -u, phi = 1 (semi-linear, L = 1)",
    },
    CatalogEntry {
        name: "gbm-call",
        dim: 1,
        noise_dim: 1,
        deterministic: true,
        oracle: "Black-Scholes call, r = 0, vol 0.2, strike 1",
        summary: "sigma(x) = 0.2 x, a = sigma^2 / 2, phi = max(x - 1, 0) (degenerate at x = 0)",
    },
    CatalogEntry {
        name: "heat",
        dim: 1,
        noise_dim: 1,
        deterministic: true,
        oracle: "u(t,x) = x^2 + (T - t) (inside the cutoff)",
        summary: "sigma = 1, a = 1/2, phi = x^2 with smooth cutoff from |x| = 5 to 6",
    },
    CatalogEntry {
        name: "kinked-drift",
        dim: 1,
        noise_dim: 1,
        deterministic: true,
        oracle: "self-consistency only",
        summary: "b(x) = |x|, sigma = 1, phi = sin x (Lipschitz-only drift)",
    },
    CatalogEntry {
        name: "random-drift",
        dim: 1,
        noise_dim: 1,
        deterministic: false,
        oracle: "self-consistency only",
        summary: "b = 0.5 cos(W_t) (non-Markov), sigma = 1, phi = x^2 with cutoff",
    },
    CatalogEntry {
        name: "transport-degenerate",
        dim: 1,
        noise_dim: 1,
        deterministic: true,
        oracle: "u(t,x) = sin(x + (T - t))",
        summary: "sigma = 0, a = 0, b = 1, phi = sin x (first-order, fully degenerate)",
    },
];

/// Sorted catalogue of the built-in problems.
pub fn catalog() -> &'static [CatalogEntry] {
    CATALOG
}

pub fn builtin(name: &str) -> Result<ProblemSpec> {
    match name {
        "heat" => Ok(heat()),
        "gbm-call" => Ok(gbm_call()),
        "discount" => Ok(discount()),
        "transport-degenerate" => Ok(transport_degenerate()),
        "random-drift" => Ok(random_drift()),
        "kinked-drift" => Ok(kinked_drift()),
        other => Err(Error::InvalidInput(format!(
            "unknown problem '{other}'; known: {}",
            CATALOG.iter().map(|e| e.name).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn smooth_step_kernel(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// C^∞ step: 0 for `s <= 0`, 1 for `s >= 1`.
pub fn smooth_step(s: f64) -> f64 {
    let a = smooth_step_kernel(s);
    let b = smooth_step_kernel(1.0 - s);
    a / (a + b)
}

/// 1 on `|x| <= inner`, 0 on `|x| >= outer`, smooth in between.
pub fn cutoff(x: f64, inner: f64, outer: f64) -> f64 {
    1.0 - smooth_step((x.abs() - inner) / (outer - inner))
}

fn unit_sigma() -> CoefficientField {
    CoefficientField::constant(Shape::Matrix(1, 1), &[1.0])
}

fn half() -> CoefficientField {
    CoefficientField::constant(Shape::Matrix(1, 1), &[0.5])
}

fn quadratic_with_cutoff() -> ScalarField {
    ScalarField::of_x(|x| x[0] * x[0] * cutoff(x[0], 5.0, 6.0))
}

pub fn heat() -> ProblemSpec {
    let horizon = 1.0;
    ProblemSpec::builder("heat", 1, 1)
        .horizon(horizon)
        .sigma(unit_sigma())
        .a(half())
        .terminal(quadratic_with_cutoff())
        .radius(8.0)
        .oracle(Oracle::new("x^2 + (T - t)", move |t, x| x[0] * x[0] + (horizon - t)))
        .build()
        .expect("heat spec is well formed")
}

/// Black-Scholes call with zero rate.
pub fn black_scholes_call(spot: f64, strike: f64, vol: f64, tau: f64) -> f64 {
    if spot <= 0.0 {
        return 0.0;
    }
    if tau <= 0.0 {
        return (spot - strike).max(0.0);
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let sd = vol * tau.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * sd * sd) / sd;
    spot * n.cdf(d1) - strike * n.cdf(d1 - sd)
}

pub fn gbm_call() -> ProblemSpec {
    let vol = 0.2;
    let radius = 4.0;
    let sigma = ScalarField::of_x(move |x| vol * x[0]).with_derivatives(move |_, _, _, g| match g[0] {
        0 => None,
        1 => Some(vol),
        _ => Some(0.0),
    });
    let a = ScalarField::of_x(move |x| 0.5 * vol * vol * x[0] * x[0]);
    ProblemSpec::builder("gbm-call", 1, 1)
        .horizon(1.0)
        .sigma(CoefficientField::new(Shape::Matrix(1, 1), vec![sigma]).with_bound(vol * radius))
        .a(CoefficientField::new(Shape::Matrix(1, 1), vec![a]).with_bound(0.5 * (vol * radius).powi(2)))
        .terminal(ScalarField::of_x(|x| (x[0] - 1.0).max(0.0)))
        .radius(radius)
        .oracle(Oracle::new(
            "BS call(x; K = 1, vol = 0.2, r = 0, tau = T - t)",
            move |t, x| black_scholes_call(x[0], 1.0, vol, 1.0 - t),
        ))
        .build()
        .expect("gbm-call spec is well formed")
}

pub fn discount() -> ProblemSpec {
    let horizon = 1.0;
    ProblemSpec::builder("discount", 1, 1)
        .horizon(horizon)
        .sigma(unit_sigma())
        .a(half())
        .driver(DriverFunction::semilinear(|_, _, v| -v, 1.0).with_partial_v(|_, _, _, _, _| -1.0))
        .terminal(ScalarField::constant(1.0))
        .radius(6.0)
        .oracle(Oracle::new("exp(-(T - t))", move |t, _| (-(horizon - t)).exp()))
        .build()
        .expect("discount spec is well formed")
}

pub fn transport_degenerate() -> ProblemSpec {
    let horizon = 1.0;
    ProblemSpec::builder("transport-degenerate", 1, 1)
        .horizon(horizon)
        .sigma(CoefficientField::zeros(Shape::Matrix(1, 1)))
        .a(CoefficientField::zeros(Shape::Matrix(1, 1)))
        .b(CoefficientField::constant(Shape::Vector(1), &[1.0]))
        .terminal(ScalarField::of_x(|x| x[0].sin()))
        .radius(8.0)
        .oracle(Oracle::new("sin(x + (T - t))", move |t, x| (x[0] + horizon - t).sin()))
        .build()
        .expect("transport spec is well formed")
}

pub fn random_drift() -> ProblemSpec {
    let b = ScalarField::new(|_, _, w| 0.5 * w.cos()).path_dependent();
    ProblemSpec::builder("random-drift", 1, 1)
        .horizon(1.0)
        .sigma(unit_sigma())
        .a(half())
        .b(CoefficientField::new(Shape::Vector(1), vec![b]).with_bound(0.5))
        .terminal(quadratic_with_cutoff())
        .radius(8.0)
        .build()
        .expect("random-drift spec is well formed")
}

pub fn kinked_drift() -> ProblemSpec {
    let radius = 8.0;
    let b = ScalarField::of_x(|x| x[0].abs()).with_derivatives(|_, x, _, g| match g[0] {
        1 => Some(x[0].signum()),
        _ => None,
    });
    ProblemSpec::builder("kinked-drift", 1, 1)
        .horizon(1.0)
        .sigma(unit_sigma())
        .a(half())
        .b(CoefficientField::new(Shape::Vector(1), vec![b])
            .with_bound(radius)
            .with_smoothness(1))
        .terminal(ScalarField::of_x(|x| x[0].sin()))
        .radius(radius)
        .build()
        .expect("kinked-drift spec is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_sorted_and_complete() {
        let names: Vec<_> = catalog().iter().map(|e| e.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for n in ["heat", "gbm-call", "discount", "transport-degenerate", "random-drift"] {
            assert!(names.contains(&n));
            assert!(builtin(n).is_ok());
        }
    }

    #[test]
    fn black_scholes_at_the_money() {
        let n = Normal::new(0.0, 1.0).unwrap();
        let expected = 2.0 * n.cdf(0.1) - 1.0;
        assert!((black_scholes_call(1.0, 1.0, 0.2, 1.0) - expected).abs() < 1e-15);
        assert!((expected - 0.0797).abs() < 1e-4);
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(4.9, 5.0, 6.0), 1.0);
        assert_eq!(cutoff(-6.1, 5.0, 6.0), 0.0);
        assert!((cutoff(5.5, 5.0, 6.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn determinism_flags() {
        assert!(heat().is_deterministic());
        assert!(!random_drift().is_deterministic());
    }
}
