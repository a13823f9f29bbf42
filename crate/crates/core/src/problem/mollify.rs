//! Coefficient smoothing `h^ε = ε^{-d} ρ(·/ε) * h` with the standard bump
//! `ρ(y) = c_d exp(-1 / (1 - |y|²))` on the unit ball.
//!
//! The convolution is evaluated by composite Gauss-Legendre quadrature over
//! the kernel support. Quadrature weights are renormalised so that the
//! discrete kernel sums to one, which makes constants exact.

use std::sync::Arc;

use super::driver::DriverFunction;
use super::field::{CoefficientField, ScalarField};
use super::spec::{half_sigma_sigma_t, ProblemSpec};
use crate::error::{Error, Result};

/// Unnormalised bump `exp(-1 / (1 - r²))` for `r² < 1`, else 0.
pub fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Discretised kernel: offsets `y_q` in the unit ball with weights summing to 1.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub dim: usize,
    pub panels: usize,
    pub order: usize,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl MollifierKernel {
    /// Composite rule with `panels` equal panels of `order`-point
    /// Gauss-Legendre per axis.
    pub fn new(dim: usize, panels: usize, order: usize) -> Self {
        let (gn, gw) = gauss_legendre(order);
        let width = 2.0 / panels as f64;
        let mut axis_nodes = Vec::with_capacity(panels * order);
        let mut axis_weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = -1.0 + p as f64 * width;
            for (z, w) in gn.iter().zip(&gw) {
                axis_nodes.push(lo + 0.5 * width * (z + 1.0));
                axis_weights.push(0.5 * width * w);
            }
        }
        let m = axis_nodes.len();
        let total = m.pow(dim as u32);
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut y = vec![0.0; dim];
        for flat in 0..total {
            let mut rest = flat;
            let mut wq = 1.0;
            for yk in y.iter_mut() {
                let i = rest % m;
                rest /= m;
                *yk = axis_nodes[i];
                wq *= axis_weights[i];
            }
            let r2: f64 = y.iter().map(|v| v * v).sum();
            let k = bump(r2);
            if k > 0.0 {
                offsets.extend_from_slice(&y);
                weights.push(wq * k);
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Self {
            dim,
            panels,
            order,
            offsets,
            weights,
        }
    }

    /// 96 nodes per axis in 1-d, 32 per axis above.
    pub fn standard(dim: usize) -> Self {
        if dim == 1 {
            Self::new(1, 16, 6)
        } else {
            Self::new(dim, 8, 4)
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ_q W_q g(y_q)`.
    pub fn integrate(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        self.weights
            .iter()
            .zip(self.offsets.chunks_exact(self.dim))
            .map(|(w, y)| w * g(y))
            .sum()
    }

    /// `∫ |y| ρ(y) dy` under this discretisation.
    pub fn first_absolute_moment(&self) -> f64 {
        self.integrate(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

/// `c_d` for the bump, computed by the same quadrature (unit mass).
pub fn bump_normaliser(dim: usize) -> f64 {
    let (gn, gw) = gauss_legendre(64);
    match dim {
        1 => 1.0 / gn.iter().zip(&gw).map(|(z, w)| w * bump(z * z)).sum::<f64>(),
        _ => {
            let mut s = 0.0;
            for (zi, wi) in gn.iter().zip(&gw) {
                for (zj, wj) in gn.iter().zip(&gw) {
                    s += wi * wj * bump(zi * zi + zj * zj);
                }
            }
            1.0 / s
        }
    }
}

/// `h^ε(t, x, w) = ∫ ρ(y) h(t, x - εy, w) dy`.
pub fn mollify_field(h: &ScalarField, epsilon: f64, kernel: &MollifierKernel) -> Result<ScalarField> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "mollification width must be positive, got {epsilon}"
        )));
    }
    if h.as_constant().is_some() {
        return Ok(h.clone());
    }
    let src = h.clone();
    let k = Arc::new(kernel.clone());
    let out = ScalarField::new(move |t, x, w| {
        let mut p = [0.0; 4];
        let p = &mut p[..x.len()];
        k.integrate(|y| {
            for ((pi, xi), yi) in p.iter_mut().zip(x).zip(y) {
                *pi = xi - epsilon * yi;
            }
            src.eval(t, p, w)
        })
    });
    Ok(if h.uses_path() { out.path_dependent() } else { out })
}

pub fn mollify_coefficient(f: &CoefficientField, epsilon: f64, kernel: &MollifierKernel) -> Result<CoefficientField> {
    let comps = f
        .components()
        .iter()
        .map(|c| mollify_field(c, epsilon, kernel))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoefficientField::new(f.shape(), comps)
        .with_bound(f.bound())
        .with_smoothness(2))
}

pub fn mollify_driver(f: &DriverFunction, epsilon: f64, kernel: &MollifierKernel) -> Result<DriverFunction> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "mollification width must be positive, got {epsilon}"
        )));
    }
    let raw = f.raw();
    let k = Arc::new(kernel.clone());
    let g = Arc::new(move |t: f64, x: &[f64], w: f64, v: f64, r: &[f64]| {
        let mut p = [0.0; 4];
        let p = &mut p[..x.len()];
        k.integrate(|y| {
            for ((pi, xi), yi) in p.iter_mut().zip(x).zip(y) {
                *pi = xi - epsilon * yi;
            }
            raw(t, p, w, v, r)
        })
    });
    Ok(DriverFunction::from_parts(
        g,
        f.lipschitz(),
        f.depends_on_v(),
        f.depends_on_r(),
        f.uses_path(),
    ))
}

/// Mollifies `b, σ, c, ν, f, φ` of `spec`; `a` becomes `½ σ^ε σ^εᵀ`.
pub fn mollify_spec(spec: &ProblemSpec, epsilon: f64) -> Result<ProblemSpec> {
    if spec.dim > 4 {
        return Err(Error::Capability("mollification supports d <= 4".into()));
    }
    let k = MollifierKernel::standard(spec.dim);
    let mut s = spec.clone();
    s.b = mollify_coefficient(&spec.b, epsilon, &k)?;
    s.sigma = mollify_coefficient(&spec.sigma, epsilon, &k)?;
    s.c = mollify_coefficient(&spec.c, epsilon, &k)?;
    s.nu = mollify_coefficient(&spec.nu, epsilon, &k)?;
    s.driver = if spec.driver.is_zero() {
        spec.driver.clone()
    } else {
        mollify_driver(&spec.driver, epsilon, &k)?
    };
    s.terminal = mollify_field(&spec.terminal, epsilon, &k)?;
    s.a = half_sigma_sigma_t(&s.sigma, spec.dim, spec.noise_dim);
    s.name = format!("{}@eps={epsilon}", spec.name);
    s.oracle = None;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn constants_are_reproduced() {
        for d in [1, 2] {
            let k = MollifierKernel::standard(d);
            let h = ScalarField::new(|_, _, _| 3.0);
            let he = mollify_field(&h, 0.37, &k).unwrap();
            let x = vec![0.4; d];
            assert!((he.eval(0.0, &x, 0.0) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_positive_width_is_rejected() {
        let k = MollifierKernel::standard(1);
        assert!(matches!(
            mollify_field(&ScalarField::of_x(|x| x[0]), 0.0, &k),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn abs_deviation_within_lipschitz_bound() {
        let k = MollifierKernel::standard(1);
        let h = ScalarField::of_x(|x| x[0].abs());
        let he = mollify_field(&h, 0.1, &k).unwrap();
        let bound = 0.1 * k.first_absolute_moment();
        for i in 0..=400 {
            let x = -1.0 + i as f64 * 0.005;
            let dev = (he.eval(0.0, &[x], 0.0) - x.abs()).abs();
            assert!(dev <= bound * (1.0 + 1e-9), "x = {x}: {dev} > {bound}");
        }
    }

    #[test]
    fn normaliser_matches_known_value() {
        // ∫_{-1}^{1} exp(-1/(1-y²)) dy = 0.443993816...
        assert!((1.0 / bump_normaliser(1) - 0.443_993_816_168_079_4).abs() < 1e-9);
    }
}
