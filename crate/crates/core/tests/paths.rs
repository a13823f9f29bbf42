use std::sync::Arc;

use fkverify::paths::{
    euler_maruyama_forward, euler_maruyama_forward_with, flow_moment, generate_brownian, generate_brownian_with,
    preflight_radius, StartPoint, TimeGrid,
};
use fkverify::problem::{library, CoefficientField, ProblemSpec, ScalarField, Shape};
use fkverify::{Error, Exec};
use proptest::prelude::*;

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn bm(radius: f64) -> ProblemSpec {
    ProblemSpec::builder("bm", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .radius(radius)
        .build()
        .unwrap()
}

fn ou(radius: f64) -> ProblemSpec {
    ProblemSpec::builder("ou", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .b(CoefficientField::scalar(ScalarField::of_x(|x| -x[0])))
        .radius(radius)
        .build()
        .unwrap()
}

#[test]
fn terminal_brownian_value_is_standard_normal() {
    let n = 50_000;
    let b = generate_brownian(2, TimeGrid::new(0.0, 2.0, 40).unwrap(), n, 11).unwrap();
    for j in 0..2 {
        let w: Vec<f64> = (0..n).map(|p| (0..40).map(|k| b.increment(p, k)[j]).sum()).collect();
        let (m, v) = mean_var(&w);
        // Var W_T = 2; the sample variance has stderr 2·sqrt(2/n).
        assert!(m.abs() < 4.0 * (2.0 / n as f64).sqrt(), "mean {m}");
        assert!((v - 2.0).abs() < 4.0 * 2.0 * (2.0 / n as f64).sqrt(), "var {v}");
        let fourth = w.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        assert!((fourth - 12.0).abs() < 0.6, "fourth moment {fourth}");
    }
    let cross = (0..n).map(|p| b.increment(p, 3)[0] * b.increment(p, 3)[1]).sum::<f64>() / n as f64;
    assert!(cross.abs() < 4.0 * 0.05 / (n as f64).sqrt());
}

#[test]
fn gbm_second_moment_matches_euler_recursion() {
    let spec = library::gbm_call();
    let (n, steps, vol) = (100_000, 50, 0.2);
    let b = Arc::new(generate_brownian(1, TimeGrid::new(0.0, 1.0, steps).unwrap(), n, 5).unwrap());
    let ens = euler_maruyama_forward(&spec, &StartPoint::new(0.0, vec![1.0]), &b).unwrap();
    let xt: Vec<f64> = (0..n).map(|p| ens.state(p, steps)[0]).collect();
    let (m, v) = mean_var(&xt);
    assert!((m - 1.0).abs() < 4.0 * (v / n as f64).sqrt(), "martingale mean {m}");
    // Euler: E X_N² = (1 + σ²Δt)^N exactly; continuous time: e^{σ²T}.
    let dt = 1.0 / steps as f64;
    let euler = (1.0 + vol * vol * dt).powi(steps as i32);
    let second: Vec<f64> = xt.iter().map(|x| x * x).collect();
    let (m2, v2) = mean_var(&second);
    assert!((m2 - euler).abs() < 4.0 * (v2 / n as f64).sqrt(), "{m2} vs {euler}");
    assert!((euler - (vol * vol).exp()).abs() < 2e-5);
    assert_eq!(ens.exit_fraction(), 0.0, "{}", ens.exit_fraction());
}

#[test]
fn ou_mean_has_weak_order_one() {
    let spec = ou(30.0);
    let x0 = 4.0;
    let fine = generate_brownian(1, TimeGrid::new(0.0, 1.0, 40).unwrap(), 100_000, 9).unwrap();
    let exact = x0 * (-1.0f64).exp();
    let errors: Vec<f64> = [4, 2, 1]
        .iter()
        .map(|&f| {
            let b = Arc::new(fine.coarsen(f).unwrap());
            let ens = euler_maruyama_forward(&spec, &StartPoint::new(0.0, vec![x0]), &b).unwrap();
            let n = b.grid.n_steps;
            let m = (0..b.n_paths).map(|p| ens.state(p, n)[0]).sum::<f64>() / b.n_paths as f64;
            (m - exact).abs()
        })
        .collect();
    for w in errors.windows(2) {
        let r = w[0] / w[1];
        assert!((1.6..2.5).contains(&r), "{errors:?}");
    }
}

#[test]
fn flow_moment_of_translated_brownian_motion_is_exact() {
    let spec = bm(50.0);
    let a = StartPoint::new(0.0, vec![0.3]);
    let b = StartPoint::new(0.0, vec![0.5]);
    for p in [1.0, 2.0] {
        let m = flow_moment(Exec::Sequential, &spec, &a, &b, p, 500, 20, 1).unwrap();
        let dx: f64 = 0.2;
        assert!((m.numerator - dx.powf(2.0 * p)).abs() < 1e-12);
        let want = 1.0 / (1.0 + 0.3f64.powf(2.0 * p) + 0.5f64.powf(2.0 * p));
        assert!((m.ratio - want).abs() < 1e-9, "{} vs {want}", m.ratio);
        assert!(m.stderr < 1e-6, "{}", m.stderr);
    }
}

#[test]
fn flow_moment_in_time_lies_between_doob_bounds() {
    let spec = bm(50.0);
    let x = StartPoint::new(0.25, vec![0.0]);
    let y = StartPoint::new(0.5, vec![0.0]);
    let m = flow_moment(Exec::Parallel, &spec, &x, &y, 1.0, 40_000, 40, 3).unwrap();
    // sup over an interval of length δ of |B|²: at least E|B_δ|² = δ, at most 4δ.
    let delta = 0.25;
    assert!(m.numerator > delta - 4.0 * m.stderr * m.denominator);
    assert!(m.numerator < 4.0 * delta);
    assert!(matches!(
        flow_moment(Exec::Sequential, &spec, &x, &x, 1.0, 10, 10, 1),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(
        flow_moment(Exec::Sequential, &spec, &x, &y, 0.5, 10, 10, 1),
        Err(Error::Domain(_))
    ));
}

#[test]
fn clamping_is_counted_against_the_budget() {
    let b = Arc::new(generate_brownian(1, TimeGrid::new(0.0, 1.0, 20).unwrap(), 2000, 2).unwrap());
    let tight = euler_maruyama_forward(&bm(0.5), &StartPoint::new(0.0, vec![0.0]), &b).unwrap();
    assert!(tight.exit_fraction() > 0.3);
    assert!(matches!(tight.check_exit_budget(), Err(Error::ExitBudget { .. })));
    for p in 0..b.n_paths {
        assert!(tight.state(p, 20)[0].abs() <= 0.5);
    }
    let loose = euler_maruyama_forward(&bm(20.0), &StartPoint::new(0.0, vec![0.0]), &b).unwrap();
    assert!(loose.check_exit_budget().is_ok());
}

#[test]
fn preflight_radius_covers_the_burst() {
    let r = preflight_radius(&bm(1.0), &[0.0], 4).unwrap();
    // The max of 10⁴ Brownian paths on [0, 1] is about 4.
    assert!((4.0..=7.0).contains(&r), "{r}");
    assert_eq!((2.0 * r).fract(), 0.0);
    let shifted = preflight_radius(&bm(1.0), &[3.0], 4).unwrap();
    assert!(shifted > r);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bundle_independent_of_schedule(seed in any::<u64>(), paths in 1usize..64, steps in 1usize..12, dp in 1usize..3) {
        let g = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let a = generate_brownian_with(Exec::Sequential, dp, g, paths, seed).unwrap();
        let b = generate_brownian_with(Exec::Parallel, dp, g, paths, seed).unwrap();
        prop_assert_eq!(a.increments(), b.increments());
    }

    #[test]
    fn prefix_of_larger_bundle_is_the_smaller_bundle(seed in any::<u64>(), paths in 1usize..40) {
        let g = TimeGrid::new(0.0, 1.0, 6).unwrap();
        let small = generate_brownian(1, g, paths, seed).unwrap();
        let big = generate_brownian(1, g, paths + 7, seed).unwrap();
        prop_assert_eq!(small.increments(), &big.increments()[..small.increments().len()]);
    }

    #[test]
    fn grid_index_inverts_node(steps in 1usize..500, t0 in 0.0f64..1.0, len in 0.1f64..5.0) {
        let g = TimeGrid::new(t0, t0 + len, steps).unwrap();
        for k in [0, steps / 3, steps / 2, steps] {
            prop_assert_eq!(g.index_of(g.node(k)).unwrap(), k);
        }
    }

    #[test]
    fn pure_drift_is_a_straight_line(x0 in -2.0f64..2.0, v in -1.0f64..1.0, start in 0usize..10) {
        let spec = ProblemSpec::builder("drift", 1, 1)
            .b(CoefficientField::constant(Shape::Vector(1), &[v]))
            .radius(10.0)
            .build()
            .unwrap();
        let b = Arc::new(generate_brownian(1, TimeGrid::new(0.0, 1.0, 10).unwrap(), 4, 1).unwrap());
        let t0 = b.grid.node(start);
        let ens = euler_maruyama_forward_with(Exec::Sequential, &spec, &StartPoint::new(t0, vec![x0]), &b).unwrap();
        for k in 0..=10 {
            let want = x0 + v * (b.grid.node(k) - t0).max(0.0);
            prop_assert!((ens.state(3, k)[0] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn every_step_has_the_right_law() {
    let (n, steps) = (100_000, 8);
    let b = generate_brownian(1, TimeGrid::new(0.0, 2.0, steps).unwrap(), n, 21).unwrap();
    let dt = 0.25;
    for k in 0..steps {
        let v: Vec<f64> = (0..n).map(|p| b.increment(p, k)[0]).collect();
        let (m, var) = mean_var(&v);
        assert!(m.abs() <= 4.0 * (dt / n as f64).sqrt(), "step {k}: mean {m}");
        assert!((var - dt).abs() <= 0.05 * dt, "step {k}: variance {var}");
    }
}
