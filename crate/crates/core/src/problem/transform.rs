//! The substitution `q̂ = q + u_x σ`, which turns the operator pair `(𝓛, 𝓜)`
//! into `𝓛̂ = (a - 2α)^{ij} ∂_ij + b̃^i ∂_i + c` with `α = ½ σσᵀ` and
//! `b̃^i = b^i - σ^{ik}_{x^j} σ^{jk} - ν^k σ^{ik}`.

use super::field::{CoefficientField, ScalarField, Shape};
use super::spec::{half_sigma_sigma_t, ProblemSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct TransformedSpec {
    pub alpha: CoefficientField,
    pub residual_diffusion: CoefficientField,
    pub b_tilde: CoefficientField,
    pub source: ProblemSpec,
}

pub fn transform_spec(spec: &ProblemSpec) -> Result<TransformedSpec> {
    let (d, dp) = (spec.dim, spec.noise_dim);
    if spec.sigma.smoothness() < 1 {
        return Err(Error::Capability(
            "sigma must provide first spatial derivatives (smoothness >= 1)".into(),
        ));
    }
    let alpha = half_sigma_sigma_t(&spec.sigma, d, dp);

    let mut resid = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let aij = spec.a.entry(i, j).clone();
            let alij = alpha.entry(i, j).clone();
            match (aij.as_constant(), alij.as_constant()) {
                (Some(p), Some(q)) => resid.push(ScalarField::constant(p - 2.0 * q)),
                _ => {
                    let uses_path = aij.uses_path() || alij.uses_path();
                    let f = ScalarField::new(move |t, x, w| aij.eval(t, x, w) - 2.0 * alij.eval(t, x, w));
                    resid.push(if uses_path { f.path_dependent() } else { f });
                }
            }
        }
    }

    let mut bt = Vec::with_capacity(d);
    for i in 0..d {
        let src = spec.clone();
        let uses_path = !spec.is_deterministic();
        let f = ScalarField::new(move |t, x, w| {
            let mut v = src.b.entry(i, 0).eval(t, x, w);
            let mut gamma = vec![0usize; src.dim];
            for k in 0..src.noise_dim {
                let sik = src.sigma.entry(i, k);
                for j in 0..src.dim {
                    gamma.iter_mut().for_each(|g| *g = 0);
                    gamma[j] = 1;
                    v -= sik.deriv(t, x, w, &gamma) * src.sigma.entry(j, k).eval(t, x, w);
                }
                v -= src.nu.entry(k, 0).eval(t, x, w) * sik.eval(t, x, w);
            }
            v
        });
        bt.push(if uses_path { f.path_dependent() } else { f });
    }

    Ok(TransformedSpec {
        residual_diffusion: CoefficientField::new(Shape::Matrix(d, d), resid).with_smoothness(spec.a.smoothness()),
        b_tilde: CoefficientField::new(Shape::Vector(d), bt).with_smoothness(spec.sigma.smoothness().saturating_sub(1)),
        alpha,
        source: spec.clone(),
    })
}

/// `u_x σ` as a `d'`-vector: `(u_x σ)^k = Σ_i u_{x^i} σ^{ik}`.
pub fn gradient_times_sigma(ux: &[f64], sigma_row_major: &[f64], noise_dim: usize, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate().take(noise_dim) {
        *o = ux
            .iter()
            .enumerate()
            .map(|(i, g)| g * sigma_row_major[i * noise_dim + k])
            .sum();
    }
}

/// `q̂ = q + u_x σ`.
pub fn qhat_from_q(q: &[f64], ux: &[f64], sigma: &[f64], noise_dim: usize) -> Vec<f64> {
    let mut s = vec![0.0; noise_dim];
    gradient_times_sigma(ux, sigma, noise_dim, &mut s);
    q.iter().zip(&s).map(|(a, b)| a + b).collect()
}

/// `q = q̂ - u_x σ`.
pub fn q_from_qhat(qhat: &[f64], ux: &[f64], sigma: &[f64], noise_dim: usize) -> Vec<f64> {
    let mut s = vec![0.0; noise_dim];
    gradient_times_sigma(ux, sigma, noise_dim, &mut s);
    qhat.iter().zip(&s).map(|(a, b)| a - b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_sigma_keeps_drift() {
        let spec = ProblemSpec::builder("c", 1, 1)
            .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[0.7]))
            .b(CoefficientField::scalar(ScalarField::of_x(|x| x[0].cos())))
            .radius(3.0)
            .build()
            .unwrap();
        let tr = transform_spec(&spec).unwrap();
        for x in [-2.0, 0.1, 1.7] {
            assert_eq!(tr.b_tilde.eval_scalar(0.0, &[x], 0.0), x.cos());
        }
    }

    #[test]
    fn linear_sigma_gives_minus_x() {
        let sigma = ScalarField::of_x(|x| x[0]).with_derivatives(|_, _, _, g| Some(if g[0] == 1 { 1.0 } else { 0.0 }));
        let spec = ProblemSpec::builder("lin", 1, 1)
            .sigma(CoefficientField::new(Shape::Matrix(1, 1), vec![sigma]))
            .radius(3.0)
            .build()
            .unwrap();
        let tr = transform_spec(&spec).unwrap();
        for x in [-1.5, 0.0, 0.4, 2.0] {
            assert!((tr.b_tilde.eval_scalar(0.0, &[x], 0.0) + x).abs() < 1e-14);
        }
    }

    #[test]
    fn a_equal_sigma_sigma_t_cancels() {
        let s = [1.0, 0.5, -0.2, 0.8];
        let sst = [1.0 + 0.25, -0.2 + 0.4, -0.2 + 0.4, 0.04 + 0.64];
        let spec = ProblemSpec::builder("cancel", 2, 2)
            .sigma(CoefficientField::constant(Shape::Matrix(2, 2), &s))
            .a(CoefficientField::constant(Shape::Matrix(2, 2), &sst))
            .radius(1.0)
            .build()
            .unwrap();
        let tr = transform_spec(&spec).unwrap();
        for v in tr.residual_diffusion.eval(0.0, &[0.0, 0.0], 0.0) {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn rough_sigma_is_a_capability_error() {
        let spec = ProblemSpec::builder("rough", 1, 1)
            .sigma(
                CoefficientField::new(Shape::Matrix(1, 1), vec![ScalarField::of_x(|x| x[0].abs())]).with_smoothness(0),
            )
            .radius(1.0)
            .build()
            .unwrap();
        assert!(matches!(transform_spec(&spec), Err(Error::Capability(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            ux in prop::collection::vec(-5.0f64..5.0, 2),
            qhat in prop::collection::vec(-5.0f64..5.0, 3),
            sigma in prop::collection::vec(-2.0f64..2.0, 6),
        ) {
            let q = q_from_qhat(&qhat, &ux, &sigma, 3);
            let mut s = vec![0.0; 3];
            gradient_times_sigma(&ux, &sigma, 3, &mut s);
            for k in 0..3 {
                // (q̂ - u_x σ) + u_x σ recovers q̂ to rounding of one subtraction
                prop_assert!(((q[k] + s[k]) - qhat[k]).abs() <= 1e-14 * (1.0 + qhat[k].abs() + s[k].abs()));
            }
        }
    }
}
