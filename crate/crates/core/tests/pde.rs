use fkverify::bsde::PicardConfig;
use fkverify::pde::{
    default_test_functions, solve_backward_linear_pde, solve_backward_semilinear_pde, viscosity_sweep, weak_residual,
    GridFunction, PdeConfig, TestFunction, DEFAULT_SCHEDULE,
};
use fkverify::problem::{library, CoefficientField, DriverFunction, ProblemSpec, ScalarField, Shape};
use fkverify::Error;

fn bm(name: &str, radius: f64) -> fkverify::problem::spec::ProblemBuilder {
    ProblemSpec::builder(name, 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .radius(radius)
}

fn cfg(h: f64, n_steps: usize) -> PdeConfig {
    PdeConfig {
        h,
        n_steps,
        epsilon: 0.0,
    }
}

#[test]
fn heat_matches_closed_form() {
    let spec = library::heat();
    let c = cfg(0.02, 200);
    let u = solve_backward_linear_pde(&spec, &c).unwrap();
    let err = (u.value_at(0.0, &[0.0]) - 1.0).abs();
    assert!(err <= 2.0 * 0.02f64.powi(2) + 2.0 * 0.005, "{err}");
    for &x in &[-1.0, 0.5, 1.0] {
        for &t in &[0.0, 0.25, 0.5] {
            assert!((u.value_at(t, &[x]) - (x * x + 1.0 - t)).abs() < 1e-3);
        }
    }
}

#[test]
fn constants_are_preserved() {
    let spec = bm("k", 3.0).terminal(ScalarField::constant(2.5)).build().unwrap();
    let u = solve_backward_linear_pde(&spec, &cfg(0.1, 20)).unwrap();
    assert!(u.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
}

#[test]
fn degenerate_gbm_call_matches_black_scholes() {
    let spec = library::gbm_call();
    let u = solve_backward_linear_pde(&spec, &cfg(0.01, 200)).unwrap();
    let v = u.value_at(0.0, &[1.0]);
    let bs = library::black_scholes_call(1.0, 1.0, 0.2, 1.0);
    assert!((bs - 0.0797).abs() < 1e-4);
    assert!((v - bs).abs() / bs < 0.02, "{v} vs {bs}");
}

#[test]
fn semilinear_discount() {
    let spec = library::discount();
    let sol = solve_backward_semilinear_pde(&spec, &cfg(0.05, 200), &PicardConfig::default()).unwrap();
    let e = (-1.0f64).exp();
    for &x in &[-2.0, 0.0, 2.0] {
        assert!((sol.u.value_at(0.0, &[x]) - e).abs() / e < 0.01);
    }
    let picard = PicardConfig {
        c1: Some(1.0),
        ..PicardConfig::default()
    };
    let ratios = fkverify::analysis::picard::picard_contraction_ratio(&sol.picard, picard.lambda1(1.0)).unwrap();
    assert!(ratios.iter().all(|&r| r <= 0.6), "{ratios:?}");
}

#[test]
fn stationary_fixed_point() {
    let spec = bm("fix", 4.0)
        .terminal(ScalarField::constant(1.0))
        .driver(DriverFunction::semilinear(|_, _, v| 1.0 - v, 1.0))
        .build()
        .unwrap();
    let tol = 1e-9;
    let sol = solve_backward_semilinear_pde(
        &spec,
        &cfg(0.1, 50),
        &PicardConfig {
            tol,
            ..PicardConfig::default()
        },
    )
    .unwrap();
    assert!(
        sol.u.values.iter().all(|v| (v - 1.0).abs() <= tol),
        "{}",
        sol.iterations
    );
}

#[test]
fn zero_driver_is_one_linear_solve() {
    let spec = library::heat();
    let c = cfg(0.05, 50);
    let a = solve_backward_semilinear_pde(&spec, &c, &PicardConfig::default()).unwrap();
    let b = solve_backward_linear_pde(&spec, &c).unwrap();
    assert_eq!(a.iterations, 1);
    assert_eq!(a.u.values, b.values);
    assert!(a.picard.single_pass);
}

#[test]
fn linear_solver_refuses_solution_dependent_driver() {
    let spec = library::discount();
    assert!(matches!(
        solve_backward_linear_pde(&spec, &cfg(0.1, 10)),
        Err(Error::Capability(_))
    ));
    assert!(matches!(
        solve_backward_linear_pde(&library::random_drift(), &cfg(0.1, 10)),
        Err(Error::Capability(_))
    ));
}

#[test]
fn discrete_maximum_principle() {
    // Sign-changing data and c <= 0: u stays inside [min φ, max φ].
    let spec = ProblemSpec::builder("mp", 1, 1)
        .sigma(CoefficientField::new(
            Shape::Matrix(1, 1),
            vec![ScalarField::of_x(|x| 0.5 + 0.3 * x[0].sin())],
        ))
        .b(CoefficientField::new(
            Shape::Vector(1),
            vec![ScalarField::of_x(|x| x[0].cos())],
        ))
        .c(CoefficientField::new(
            Shape::Scalar,
            vec![ScalarField::of_x(|x| -x[0].abs())],
        ))
        .terminal(ScalarField::of_x(|x| (2.0 * x[0]).sin() + 0.3))
        .radius(4.0)
        .build()
        .unwrap();
    let u = solve_backward_linear_pde(&spec, &cfg(0.05, 100)).unwrap();
    let phi = u.slice(u.time.n_steps).to_vec();
    let (lo, hi) = phi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo < 0.0 && hi > 0.0);
    assert!(u.values.iter().all(|&v| v >= lo && v <= hi));
}

#[test]
fn positive_data_decays_towards_zero_not_below() {
    // c < 0 with φ >= 1: u falls below min φ but stays in [0, max φ].
    let spec = bm("decay", 4.0)
        .c(CoefficientField::constant(Shape::Scalar, &[-1.0]))
        .terminal(ScalarField::of_x(|x| 1.5 + x[0].cos()))
        .build()
        .unwrap();
    let u = solve_backward_linear_pde(&spec, &cfg(0.05, 100)).unwrap();
    assert!(u.values.iter().all(|&v| (0.0..=2.5).contains(&v)));
    assert!(u.values.iter().any(|&v| v < 0.5));
}

#[test]
fn terminal_slice_is_phi() {
    for spec in [library::heat(), library::gbm_call(), library::transport_degenerate()] {
        let u = solve_backward_linear_pde(&spec, &cfg(0.05, 10)).unwrap();
        let k = u.time.n_steps;
        for (idx, v) in u.slice(k).iter().enumerate() {
            let x = u.space.point(idx);
            assert!((v - spec.terminal.eval(spec.horizon, &x, 0.0)).abs() <= 1e-14);
        }
    }
}

#[test]
fn refinement_slope() {
    let spec = bm("cos", 8.0)
        .terminal(ScalarField::of_x(|x| x[0].cos()))
        .build()
        .unwrap();
    let exact = (-0.5f64).exp();
    let errs: Vec<f64> = [(0.2, 10), (0.1, 20), (0.05, 40)]
        .iter()
        .map(|&(h, n)| {
            (solve_backward_linear_pde(&spec, &cfg(h, n))
                .unwrap()
                .value_at(0.0, &[0.0])
                - exact)
                .abs()
        })
        .collect();
    for w in errs.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!(slope >= 0.9, "{errs:?}");
    }
}

#[test]
fn sup_norm_a_priori_bound() {
    let spec = bm("src", 4.0)
        .c(CoefficientField::constant(Shape::Scalar, &[-0.5]).with_bound(0.5))
        .driver(DriverFunction::semilinear(|_, x, v| 0.5 * x[0].sin() - 0.8 * v, 0.8))
        .terminal(ScalarField::of_x(|x| x[0].cos()))
        .build()
        .unwrap();
    let sol = solve_backward_semilinear_pde(&spec, &cfg(0.05, 100), &PicardConfig::default()).unwrap();
    let bound = ((0.5 + 0.8) * 1.0f64).exp() * (1.0 + 1.0 * 0.5);
    assert!(sol.u.sup_norm() <= bound);
}

#[test]
fn two_dimensional_heat() {
    let spec = ProblemSpec::builder("heat2", 2, 2)
        .sigma(CoefficientField::constant(Shape::Matrix(2, 2), &[1.0, 0.0, 0.0, 1.0]))
        .a(CoefficientField::constant(Shape::Matrix(2, 2), &[0.5, 0.2, 0.2, 0.5]))
        .terminal(ScalarField::of_x(|x| x[0] * x[0] + x[1] * x[1] + x[0] * x[1]))
        .radius(6.0)
        .build()
        .unwrap();
    let u = solve_backward_linear_pde(&spec, &cfg(0.1, 40)).unwrap();
    // u = φ + (T - t)(2 a11 + 2 a22 + 2 a12)
    let v = u.value_at(0.0, &[0.3, -0.2]);
    let exact = 0.09 + 0.04 - 0.06 + 2.4;
    assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
}

#[test]
fn qhat_is_sigma_times_gradient() {
    let spec = library::gbm_call();
    let u = solve_backward_linear_pde(&spec, &cfg(0.02, 20)).unwrap();
    let q = u.qhat(&spec);
    assert_eq!(q.components, 1);
    let k = 0;
    let g = u.gradient(k);
    for idx in [10, 150, 300] {
        let x = u.space.point(idx)[0];
        assert!((q.slice(k)[idx] - 0.2 * x * g[idx]).abs() < 1e-12);
    }
}

#[test]
fn csv_slice_has_header_and_rows() {
    let spec = library::heat();
    let u = solve_backward_linear_pde(&spec, &cfg(0.5, 4)).unwrap();
    let mut buf = Vec::new();
    u.write_csv_slice(&mut buf, 0).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,u");
    assert_eq!(lines.len(), u.space.len() + 1);
}

#[test]
fn transport_viscosity_sweep() {
    let spec = library::transport_degenerate();
    let c = cfg(0.02, 200);
    let report = viscosity_sweep(&spec, &c, &DEFAULT_SCHEDULE, &PicardConfig::default()).unwrap();
    assert!(!report.fallback);
    assert!(report.monotone, "{:?}", report.gaps);
    assert!(report.cauchy, "{:?}", report.halving_ratios);
    assert_eq!(report.halving_ratios.len(), 2);
    let u = report.limit.as_ref().unwrap();
    let budget = 3.0 * (0.02 + 0.005);
    let mut worst = 0.0f64;
    for k in 0..u.n_times() {
        let t = u.time.node(k);
        for idx in 0..u.space.len() {
            let x = u.space.point(idx)[0];
            if x.abs() <= 5.0 {
                worst = worst.max((u.slice(k)[idx] - (x + 1.0 - t).sin()).abs());
            }
        }
    }
    assert!(worst <= budget, "{worst}");
    // Richardson constants of the halving steps stay within a factor 2.
    let r: Vec<f64> = report.gaps[..3].iter().map(|g| g.richardson).collect();
    let (lo, hi) = r
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 2.0, "{r:?}");
}

#[test]
fn heat_viscosity_gap_is_two_eps_times_time_to_go() {
    // Inside the cutoff u_xx = 2, so the viscous solution is x² + (1 + 2ε)(T - t).
    let spec = library::heat();
    let report = viscosity_sweep(&spec, &cfg(0.05, 50), &[0.0125, 0.0], &PicardConfig::default()).unwrap();
    let u0 = report.limit.as_ref().unwrap();
    let ue = solve_backward_linear_pde(
        &spec,
        &PdeConfig {
            epsilon: 0.0125,
            ..cfg(0.05, 50)
        },
    )
    .unwrap();
    for &x in &[-1.0, 0.0, 0.5] {
        for &t in &[0.0, 0.5] {
            let gap = ue.value_at(t, &[x]) - u0.value_at(t, &[x]);
            assert!((gap - 2.0 * 0.0125 * (1.0 - t)).abs() < 1e-4, "{gap}");
        }
    }
}

#[test]
fn sweep_rejects_bad_schedules() {
    let spec = library::heat();
    for s in [&[0.1][..], &[0.05, 0.1], &[0.1, -0.1]] {
        assert!(viscosity_sweep(&spec, &cfg(0.1, 10), s, &PicardConfig::default()).is_err());
    }
}

#[test]
fn weak_residual_consistency() {
    let spec = library::heat();
    let (h, n) = (0.05, 100);
    let u = solve_backward_linear_pde(&spec, &cfg(h, n)).unwrap();
    let tests = default_test_functions(&spec);
    let r = weak_residual(&u, None, &spec, &tests).unwrap();
    assert!(r <= 5.0 * (h * h + 1.0 / n as f64), "{r}");

    // Noise fails by a wide margin.
    let mut noise = u.clone();
    let mut state = 12345u64;
    for v in noise.values.iter_mut() {
        state = fkverify::seed::mix(state);
        *v = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
    }
    let rn = weak_residual(&noise, None, &spec, &tests).unwrap();
    assert!(rn > 10.0 * r, "{rn} vs {r}");
}

#[test]
fn weak_residual_stationary_identity() {
    // u = φ = x², a = 1/2, f = -𝓛φ = -1.
    let spec = ProblemSpec::builder("stat", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .terminal(ScalarField::of_x(|x| x[0] * x[0]))
        .driver(DriverFunction::source(ScalarField::constant(-1.0)))
        .radius(4.0)
        .build()
        .unwrap();
    let (space, time) = cfg(0.01, 10).grids(&spec).unwrap();
    let mut u = GridFunction::zeros(space, time, 1);
    for k in 0..u.n_times() {
        for idx in 0..space.len() {
            let x = space.point(idx)[0];
            u.slice_mut(k)[idx] = x * x;
        }
    }
    let r = weak_residual(&u, None, &spec, &[TestFunction::bump(vec![0.3], 2.0)]).unwrap();
    assert!(r <= 1e-10, "{r}");
}

#[test]
fn weak_residual_rejects_boundary_support() {
    let spec = library::heat();
    let u = solve_backward_linear_pde(&spec, &cfg(0.1, 10)).unwrap();
    assert!(matches!(
        weak_residual(&u, None, &spec, &[TestFunction::bump(vec![7.5], 1.0)]),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn doubling_the_box_leaves_the_centre_unchanged() {
    // Truncation is controlled empirically: the centre value must not feel R.
    let c = cfg(0.05, 100);
    for spec in [library::heat(), library::gbm_call(), library::discount()] {
        let a = solve_backward_semilinear_pde(&spec, &c, &PicardConfig::default()).unwrap().u;
        let wide = spec.with_radius(2.0 * spec.domain.radius);
        let b = solve_backward_semilinear_pde(&wide, &c, &PicardConfig::default()).unwrap().u;
        let centre = vec![if spec.name == "gbm-call" { 1.0 } else { 0.0 }];
        let d = (a.value_at(0.0, &centre) - b.value_at(0.0, &centre)).abs();
        assert!(d < 1e-6, "{}: {d}", spec.name);
    }
}
