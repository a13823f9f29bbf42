use std::sync::Arc;

use fkverify::bsde::{
    estimate_value_field, flow_property_residual, solve_linear_bsde, solve_semilinear_bsde, McConfig, NestedConfig,
    PicardConfig, RegressionBasis,
};
use fkverify::paths::{euler_maruyama_forward, generate_brownian, StartPoint, TimeGrid};
use fkverify::problem::{library, CoefficientField, DriverFunction, ProblemSpec, ScalarField, Shape};
use fkverify::Error;

fn bm(name: &str) -> fkverify::problem::spec::ProblemBuilder {
    ProblemSpec::builder(name, 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .radius(10.0)
}

fn forward(spec: &ProblemSpec, n_paths: usize, n_steps: usize, seed: u64) -> Arc<fkverify::paths::ForwardEnsemble> {
    let g = TimeGrid::new(0.0, spec.horizon, n_steps).unwrap();
    let b = Arc::new(generate_brownian(spec.noise_dim, g, n_paths, seed).unwrap());
    Arc::new(euler_maruyama_forward(spec, &StartPoint::new(0.0, vec![0.0]), &b).unwrap())
}

#[test]
fn identity_payoff_is_a_martingale() {
    let spec = bm("mart").terminal(ScalarField::of_x(|x| x[0])).build().unwrap();
    let fwd = forward(&spec, 20_000, 50, 3);
    let back = solve_linear_bsde(&spec, &fwd, None).unwrap();
    let worst_res = back.diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for p in (0..20_000).step_by(97) {
        for k in 0..=50 {
            worst = worst.max((back.y(p, k) - fwd.state(p, k)[0]).abs());
        }
    }
    assert!(worst <= 3.0 * worst_res, "deviation {worst} vs residual {worst_res}");
    for p in 0..20_000 {
        assert_eq!(back.y(p, 50).to_bits(), fwd.state(p, 50)[0].to_bits());
    }
}

#[test]
fn unit_source_gives_time_to_go() {
    let spec = bm("src")
        .driver(DriverFunction::source(ScalarField::constant(1.0)))
        .build()
        .unwrap();
    let fwd = forward(&spec, 5_000, 40, 4);
    let back = solve_linear_bsde(&spec, &fwd, None).unwrap();
    for p in (0..5_000).step_by(13) {
        for k in 0..=40 {
            let t = fwd.grid().node(k);
            assert!((back.y(p, k) - (1.0 - t)).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_discount_matches_exponential() {
    let spec = bm("disc")
        .c(CoefficientField::constant(Shape::Scalar, &[-1.0]))
        .terminal(ScalarField::constant(1.0))
        .build()
        .unwrap();
    let fwd = forward(&spec, 100_000, 100, 5);
    let back = solve_linear_bsde(&spec, &fwd, None).unwrap();
    let y0 = back.start_value();
    assert!((y0 - (-1.0f64).exp()).abs() / (-1.0f64).exp() < 0.01, "{y0}");
}

#[test]
fn zero_driver_takes_one_iteration() {
    let spec = library::heat();
    let fwd = forward(&spec, 2_000, 20, 6);
    let a = solve_semilinear_bsde(&spec, &fwd, None, &PicardConfig::default()).unwrap();
    let b = solve_linear_bsde(&spec, &fwd, None).unwrap();
    assert_eq!(a.picard_iterations, 1);
    assert_eq!(a.y_values(), b.y_values());
}

#[test]
fn semilinear_discount_converges_and_contracts() {
    let spec = library::discount();
    let fwd = forward(&spec, 20_000, 100, 7);
    let cfg = PicardConfig {
        c1: Some(1.0),
        ..PicardConfig::default()
    };
    let back = solve_semilinear_bsde(&spec, &fwd, None, &cfg).unwrap();
    let y0 = back.start_value();
    assert!((y0 - (-1.0f64).exp()).abs() / (-1.0f64).exp() < 0.01, "{y0}");
    let ratios = fkverify::analysis::picard::picard_contraction_ratio(&back.picard, cfg.lambda1(1.0)).unwrap();
    assert!(!ratios.is_empty());
    assert!(ratios.iter().all(|&r| r <= 0.6), "{ratios:?}");
}

#[test]
fn large_lipschitz_step_is_rejected() {
    let spec = bm("stiff")
        .driver(DriverFunction::semilinear(|_, _, v| -200.0 * v, 200.0))
        .build()
        .unwrap();
    let fwd = forward(&spec, 100, 100, 8);
    assert!(matches!(
        solve_semilinear_bsde(&spec, &fwd, None, &PicardConfig::default()),
        Err(Error::PicardDivergence { .. })
    ));
}

#[test]
fn implicit_c_step_limit() {
    let spec = bm("c")
        .c(CoefficientField::constant(Shape::Scalar, &[-150.0]))
        .build()
        .unwrap();
    let fwd = forward(&spec, 100, 100, 8);
    assert!(matches!(
        solve_linear_bsde(&spec, &fwd, None),
        Err(Error::StepSize { .. })
    ));
}

#[test]
fn shifting_terminal_shifts_every_estimate() {
    let a = bm("a").terminal(ScalarField::of_x(|x| x[0].sin())).build().unwrap();
    let b = bm("b")
        .terminal(ScalarField::of_x(|x| x[0].sin() + 0.75))
        .build()
        .unwrap();
    let fa = forward(&a, 3_000, 20, 9);
    let fb = forward(&b, 3_000, 20, 9);
    let ya = solve_linear_bsde(&a, &fa, None).unwrap();
    let yb = solve_linear_bsde(&b, &fb, None).unwrap();
    for (u, v) in ya.y_values().iter().zip(yb.y_values()) {
        assert!((v - u - 0.75).abs() < 1e-10);
    }
}

#[test]
fn value_field_matches_gaussian_moments() {
    let spec = bm("sq").terminal(ScalarField::of_x(|x| x[0] * x[0])).build().unwrap();
    let mc = McConfig {
        n_paths: 40_000,
        n_steps: 50,
        seed: 10,
        ..McConfig::default()
    };
    let field = estimate_value_field(
        &spec,
        &[0.0, 0.5, 1.0],
        &[vec![-1.0], vec![0.0], vec![1.0]],
        &mc,
        &PicardConfig::default(),
    )
    .unwrap();
    for p in &field.points {
        let exact = p.x[0] * p.x[0] + 1.0 - p.t;
        if p.t == 1.0 {
            assert_eq!(p.value, p.x[0] * p.x[0]);
            assert_eq!(p.stderr, 0.0);
        } else {
            assert!(p.stderr > 0.0);
            assert!((p.value - exact).abs() <= 3.0 * p.stderr + 1e-3, "{p:?}");
        }
    }
}

#[test]
fn doubling_paths_halves_variance() {
    let spec = bm("sq").terminal(ScalarField::of_x(|x| x[0] * x[0])).build().unwrap();
    let estimates = |n: usize| -> Vec<f64> {
        (0..400)
            .map(|s| {
                let mc = McConfig {
                    n_paths: n,
                    n_steps: 5,
                    seed: fkverify::seed::split(77, s),
                    basis: Some(RegressionBasis::Polynomial { degree: 2 }),
                    ..McConfig::default()
                };
                estimate_value_field(&spec, &[0.0], &[vec![0.0]], &mc, &PicardConfig::default())
                    .unwrap()
                    .points[0]
                    .value
            })
            .collect()
    };
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let ratio = var(&estimates(500)) / var(&estimates(1_000));
    assert!((ratio - 2.0).abs() <= 0.3 * 2.0, "variance ratio {ratio}");
}

#[test]
fn flow_property_on_heat_tightens_with_budget() {
    let spec = bm("sq").terminal(ScalarField::of_x(|x| x[0] * x[0])).build().unwrap();
    let run = |outer: usize, inner: usize| {
        let mc = McConfig {
            n_paths: outer,
            n_steps: 50,
            seed: 1,
            ..McConfig::default()
        };
        let nested = NestedConfig {
            outer_samples: 100,
            nested_paths: inner,
            ..NestedConfig::default()
        };
        flow_property_residual(
            &spec,
            &StartPoint::new(0.0, vec![0.0]),
            0.5,
            &mc,
            &nested,
            &PicardConfig::default(),
        )
        .unwrap()
        .residual
    };
    let base = run(10_000, 1_000);
    let fine = run(40_000, 4_000);
    assert!(base <= 0.10, "{base}");
    assert!(fine <= 0.05, "{fine}");
    assert!(fine < base, "{fine} vs {base}");
}

#[test]
fn flow_property_without_noise_is_exact() {
    let spec = ProblemSpec::builder("still", 1, 1)
        .terminal(ScalarField::of_x(|x| x[0].cos()))
        .radius(4.0)
        .build()
        .unwrap();
    let mc = McConfig {
        n_paths: 200,
        n_steps: 20,
        seed: 1,
        ..McConfig::default()
    };
    let nested = NestedConfig {
        outer_samples: 5,
        nested_paths: 50,
        ..NestedConfig::default()
    };
    let r = flow_property_residual(
        &spec,
        &StartPoint::new(0.0, vec![0.4]),
        0.5,
        &mc,
        &nested,
        &PicardConfig::default(),
    )
    .unwrap();
    assert!(r.residual < 1e-12);
}

#[test]
fn nested_budget_is_enforced() {
    let spec = library::heat();
    let mc = McConfig {
        n_paths: 100,
        n_steps: 10,
        ..McConfig::default()
    };
    let nested = NestedConfig {
        outer_samples: 100,
        nested_paths: 1_000,
        cost_cap: 10,
    };
    assert!(matches!(
        flow_property_residual(
            &spec,
            &StartPoint::new(0.0, vec![0.0]),
            0.5,
            &mc,
            &nested,
            &PicardConfig::default()
        ),
        Err(Error::Budget { .. })
    ));
}

#[test]
fn results_do_not_depend_on_thread_schedule() {
    let spec = library::discount();
    let run = |exec| {
        let mc = McConfig {
            n_paths: 5_000,
            n_steps: 20,
            seed: 3,
            exec,
            ..McConfig::default()
        };
        estimate_value_field(&spec, &[0.0], &[vec![0.5]], &mc, &PicardConfig::default())
            .unwrap()
            .points[0]
            .value
    };
    assert_eq!(
        run(fkverify::Exec::Parallel).to_bits(),
        run(fkverify::Exec::Sequential).to_bits()
    );
}
