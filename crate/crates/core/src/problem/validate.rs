//! Sample-based checks of the standing hypotheses: parabolicity of
//! `2a - σσᵀ`, the driver's Lipschitz bound, and coefficient bounds `K_m`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::driver::DriverFunction;
use super::field::{CoefficientField, ScalarField};
use super::spec::{DomainBox, ProblemSpec};
use crate::error::{Error, Result};

/// Margin below which `2a - σσᵀ` counts as indefinite.
pub const PARABOLICITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct ParabolicityReport {
    pub min_margin: f64,
    pub worst_t: f64,
    pub worst_x: Vec<f64>,
    pub pass: bool,
}

/// Smallest eigenvalue of `2a - σσᵀ` at a point; errors on asymmetric `a`.
pub fn parabolicity_margin(spec: &ProblemSpec, t: f64, x: &[f64]) -> Result<f64> {
    let (d, dp) = (spec.dim, spec.noise_dim);
    let a = spec.a.eval(t, x, 0.0);
    let s = spec.sigma.eval(t, x, 0.0);
    for i in 0..d {
        for j in (i + 1)..d {
            let (aij, aji) = (a[i * d + j], a[j * d + i]);
            if (aij - aji).abs() > 1e-12 * (1.0 + aij.abs().max(aji.abs())) {
                return Err(Error::NonSymmetric {
                    i,
                    j,
                    aij,
                    aji,
                    t,
                    x: x.to_vec(),
                });
            }
        }
    }
    let m = DMatrix::from_fn(d, d, |i, j| {
        let sst: f64 = (0..dp).map(|k| s[i * dp + k] * s[j * dp + k]).sum();
        2.0 * a[i * d + j] - sst
    });
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            what: "2a - σσᵀ".into(),
            t,
            x: x.to_vec(),
        });
    }
    Ok(SymmetricEigen::new(m).eigenvalues.min())
}

/// Minimum over sampled `(t, x)` of the smallest eigenvalue of `2a - σσᵀ`.
/// The box centre and corners are always included.
pub fn validate_parabolicity(spec: &ProblemSpec, sample_count: usize, seed: u64) -> Result<ParabolicityReport> {
    if sample_count == 0 {
        return Err(Error::InvalidInput("sample_count must be >= 1".into()));
    }
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<(f64, Vec<f64>)> = vec![(0.0, vec![0.0; d])];
    for mask in 0..(1usize << d.min(10)) {
        let x = (0..d)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    spec.domain.radius
                } else {
                    -spec.domain.radius
                }
            })
            .collect();
        pts.push((spec.horizon, x));
    }
    for _ in 0..sample_count {
        let mut x = vec![0.0; d];
        spec.domain.sample(&mut rng, &mut x);
        pts.push((rng.random_range(0.0..=spec.horizon), x));
    }
    let mut report = ParabolicityReport {
        min_margin: f64::INFINITY,
        worst_t: 0.0,
        worst_x: vec![0.0; d],
        pass: true,
    };
    for (t, x) in pts {
        let m = parabolicity_margin(spec, t, &x)?;
        if m < report.min_margin {
            report.min_margin = m;
            report.worst_t = t;
            report.worst_x = x;
        }
    }
    report.pass = report.min_margin >= -PARABOLICITY_TOL;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub declared: f64,
    pub max_observed_ratio: f64,
    pub pass: bool,
}

/// Range of the `v` and `r` slots used when sampling driver tuples.
pub const DRIVER_VALUE_RANGE: f64 = 10.0;

/// Largest difference quotient `|f1 - f2| / (|v1 - v2| + |r1 - r2|)` over
/// sampled tuples. Half the samples perturb `v` alone at small scales, so a
/// slope attained only along `v` is still seen.
pub fn validate_driver_lipschitz(
    f: &DriverFunction,
    domain: &DomainBox,
    horizon: f64,
    noise_dim: usize,
    sample_count: usize,
    seed: u64,
) -> LipschitzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domain.dim;
    let mut x = vec![0.0; d];
    let mut r1 = vec![0.0; noise_dim];
    let mut r2 = vec![0.0; noise_dim];
    let mut worst = 0.0f64;
    let range = DRIVER_VALUE_RANGE;
    for n in 0..sample_count {
        let t = rng.random_range(0.0..=horizon);
        domain.sample(&mut rng, &mut x);
        let v1 = rng.random_range(-range..range);
        for r in r1.iter_mut() {
            *r = rng.random_range(-range..range);
        }
        let v2;
        if n % 2 == 0 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            v2 = v1 + scale * if rng.random::<bool>() { 1.0 } else { -1.0 };
            r2.copy_from_slice(&r1);
        } else {
            v2 = rng.random_range(-range..range);
            for r in r2.iter_mut() {
                *r = rng.random_range(-range..range);
            }
        }
        let dist = (v1 - v2).abs() + r1.iter().zip(&r2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let df = (f.eval(t, &x, 0.0, v1, &r1) - f.eval(t, &x, 0.0, v2, &r2)).abs();
        worst = worst.max(df / dist);
    }
    LipschitzReport {
        declared: f.lipschitz(),
        max_observed_ratio: worst,
        pass: worst <= f.lipschitz() * (1.0 + 1e-8),
    }
}

/// Safety factor applied by [`estimate_lipschitz_constant`].
pub const LIPSCHITZ_SAFETY: f64 = 1.1;

/// Conservative spatial Lipschitz estimate of `h` on `domain` at `t = 0`:
/// `1.1 ×` the largest sampled difference quotient.
pub fn estimate_lipschitz_constant(h: &ScalarField, domain: &DomainBox, sample_count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domain.dim;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut worst = 0.0f64;
    for n in 0..sample_count {
        domain.sample(&mut rng, &mut x);
        if n % 2 == 0 {
            domain.sample(&mut rng, &mut y);
        } else {
            let scale = 10f64.powf(rng.random_range(-4.0..-1.0));
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi = xi + scale * rng.random_range(-1.0..1.0);
            }
            domain.clamp(&mut y);
        }
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist < 1e-300 {
            continue;
        }
        let q = (h.eval(0.0, &x, 0.0) - h.eval(0.0, &y, 0.0)).abs() / dist;
        worst = worst.max(q);
    }
    LIPSCHITZ_SAFETY * worst
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub coefficient: String,
    pub declared: f64,
    pub observed: f64,
    pub pass: bool,
}

/// Samples `|D^γ h|` for `|γ| <= m` and compares with the declared `K_m`.
pub fn check_bounds(
    name: &str,
    field: &CoefficientField,
    domain: &DomainBox,
    horizon: f64,
    sample_count: usize,
    seed: u64,
) -> BoundReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domain.dim;
    let m = field.smoothness().min(1) as usize;
    let mut gammas: Vec<Vec<usize>> = vec![vec![0; d]];
    if m >= 1 {
        for i in 0..d {
            let mut g = vec![0; d];
            g[i] = 1;
            gammas.push(g);
        }
    }
    let mut x = vec![0.0; d];
    let mut observed = 0.0f64;
    for _ in 0..sample_count {
        let t = rng.random_range(0.0..=horizon);
        domain.sample(&mut rng, &mut x);
        for comp in 0..field.components().len() {
            for g in &gammas {
                if let Some(v) = field.deriv(comp, t, &x, 0.0, g) {
                    observed = observed.max(v.abs());
                }
            }
        }
    }
    BoundReport {
        coefficient: name.into(),
        declared: field.bound(),
        observed,
        pass: observed <= field.bound() * (1.0 + 1e-6) + 1e-12,
    }
}

/// Bound checks for `b`, `σ`, `c`, `ν` (the `(A_1)` hypothesis).
pub fn check_all_bounds(spec: &ProblemSpec, sample_count: usize, seed: u64) -> Vec<BoundReport> {
    [("b", &spec.b), ("sigma", &spec.sigma), ("c", &spec.c), ("nu", &spec.nu)]
        .iter()
        .enumerate()
        .map(|(i, (n, f))| {
            check_bounds(
                n,
                f,
                &spec.domain,
                spec.horizon,
                sample_count,
                crate::seed::split(seed, i as u64),
            )
        })
        .collect()
}
