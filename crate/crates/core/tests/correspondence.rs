use fkverify::bsde::{McConfig, PicardConfig};
use fkverify::correspondence::{
    continuity_modulus, joint_continuity_check, joint_continuity_refinement, loglog_slope, mollification_convergence,
    verify_feynman_kac, CorrespondenceReport, Direction,
};
use fkverify::paths::StartPoint;
use fkverify::pde::{solve_backward_semilinear_pde, PdeConfig};
use fkverify::problem::{library, mollify_spec, CoefficientField, DriverFunction, ProblemSpec, ScalarField, Shape};
use fkverify::Error;

fn pde(h: f64, n_steps: usize) -> PdeConfig {
    PdeConfig {
        h,
        n_steps,
        epsilon: 0.0,
    }
}

fn mc(n_paths: usize, n_steps: usize) -> McConfig {
    McConfig {
        n_paths,
        n_steps,
        ..McConfig::default()
    }
}

fn xs(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|x| vec![*x]).collect()
}

fn assert_against_oracle(r: &CorrespondenceReport) {
    assert!(r.pass, "{r:#?}");
    for p in &r.points {
        let (dp, dm) = (p.pde_oracle_deviation.unwrap(), p.mc_oracle_deviation.unwrap());
        assert!(dp <= r.pde_budget, "pde {dp} > budget {} at {p:?}", r.pde_budget);
        // Zero-variance specs leave only the Euler bias, so the MC side gets
        // the combined tolerance rather than bare 3·stderr.
        assert!(dm <= p.tolerance, "mc {dm} > tolerance at {p:?}");
    }
}

#[test]
fn heat_correspondence() {
    let spec = library::heat();
    let r = verify_feynman_kac(
        &spec,
        &[0.0, 0.25, 0.5],
        &xs(&[-1.0, 0.0, 1.0]),
        &pde(0.05, 100),
        &mc(20_000, 50),
        &PicardConfig::default(),
        None,
    )
    .unwrap();
    assert_against_oracle(&r);
    assert_eq!(r.points.len(), 9);
    assert!(r.max_normalized_discrepancy <= 1.0);
    let p = r.point(0.0, &[1.0]).unwrap();
    assert!((p.u_pde - 2.0).abs() < 0.01 && (p.u_mc - 2.0).abs() < 0.05);
}

#[test]
fn semilinear_discount_correspondence() {
    let spec = library::discount();
    let r = verify_feynman_kac(
        &spec,
        &[0.0, 0.5, 1.0],
        &xs(&[-1.0, 0.0, 1.0]),
        &pde(0.05, 100),
        &mc(10_000, 100),
        &PicardConfig::default(),
        None,
    )
    .unwrap();
    assert_against_oracle(&r);
    let p = r.point(0.0, &[0.0]).unwrap();
    assert!((p.u_pde - (-1.0f64).exp()).abs() < 0.01 * (-1.0f64).exp());
    assert!(r.pde_iterations > 1);
    // Terminal points agree exactly.
    assert_eq!(r.point(1.0, &[0.0]).unwrap().discrepancy, 0.0);
}

#[test]
fn degenerate_gbm_correspondence() {
    let spec = library::gbm_call();
    let r = verify_feynman_kac(
        &spec,
        &[0.0],
        &xs(&[0.8, 1.0, 1.2]),
        &pde(0.01, 100),
        &mc(20_000, 100),
        &PicardConfig::default(),
        None,
    )
    .unwrap();
    assert_against_oracle(&r);
    let p = r.point(0.0, &[1.0]).unwrap();
    assert!((p.u_pde - 0.0797).abs() < 0.02 * 0.0797, "{p:?}");
}

#[test]
fn discrepancy_shrinks_under_joint_refinement() {
    let spec = library::heat();
    let mut last = f64::INFINITY;
    for (h, steps, paths) in [(0.2, 25, 2_500), (0.1, 50, 10_000), (0.05, 100, 40_000)] {
        let r = verify_feynman_kac(
            &spec,
            &[0.0, 0.5],
            &xs(&[-1.0, 0.0, 1.0]),
            &pde(h, steps),
            &mc(paths, 20),
            &PicardConfig::default(),
            Some(0.0),
        )
        .unwrap();
        assert!(r.max_discrepancy() < last, "{} vs {last}", r.max_discrepancy());
        last = r.max_discrepancy();
    }
}

#[test]
fn refuses_what_it_cannot_verify() {
    let run = |spec: &ProblemSpec| {
        verify_feynman_kac(
            spec,
            &[0.0],
            &xs(&[0.0]),
            &pde(0.1, 20),
            &mc(500, 20),
            &PicardConfig::default(),
            Some(0.1),
        )
    };
    assert!(matches!(run(&library::random_drift()), Err(Error::Capability(_))));
    let forward = ProblemSpec::builder("not-parabolic", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .a(CoefficientField::constant(Shape::Matrix(1, 1), &[0.25]))
        .radius(3.0)
        .build()
        .unwrap();
    assert!(matches!(run(&forward), Err(Error::Structural(_))));
    let liar = ProblemSpec::builder("liar", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .driver(DriverFunction::semilinear(|_, _, v| -3.0 * v, 1.0))
        .radius(3.0)
        .build()
        .unwrap();
    assert!(matches!(run(&liar), Err(Error::Structural(_))));
    let outside = verify_feynman_kac(
        &library::heat(),
        &[0.0],
        &xs(&[9.0]),
        &pde(0.1, 20),
        &mc(500, 20),
        &PicardConfig::default(),
        Some(0.1),
    );
    assert!(matches!(outside, Err(Error::Domain(_))));
}

#[test]
fn report_files() {
    let spec = library::discount();
    let r = verify_feynman_kac(
        &spec,
        &[0.0],
        &xs(&[0.0, 1.0]),
        &pde(0.1, 20),
        &mc(1_000, 20),
        &PicardConfig::default(),
        Some(0.01),
    )
    .unwrap();
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,x,u_pde,u_mc,stderr,discrepancy,tolerance,pass"
    );
    assert_eq!(lines.count(), 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    r.write_json(&path).unwrap();
    let back: CorrespondenceReport = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back.points.len(), 2);
    assert_eq!(back.pass, r.pass);
}

#[test]
fn mollification_of_kinked_drift() {
    let spec = library::kinked_drift();
    let r = mollification_convergence(
        &spec,
        &[0.2, 0.1, 0.05, 0.025],
        &StartPoint::new(0.0, vec![0.0]),
        &mc(4_000, 50),
        &PicardConfig::default(),
    )
    .unwrap();
    assert!(r.monotone && r.pass, "{r:?}");
    assert!(r.slope.unwrap() >= 0.8);
}

#[test]
fn mollification_of_smooth_data_is_negligible() {
    let b = ScalarField::of_x(|x| 0.5 * x[0].sin());
    let spec = ProblemSpec::builder("smooth", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .b(CoefficientField::new(Shape::Vector(1), vec![b]).with_bound(0.5))
        .terminal(ScalarField::of_x(|x| x[0].sin()))
        .radius(8.0)
        .build()
        .unwrap();
    let r = mollification_convergence(
        &spec,
        &[0.2, 0.1, 0.05, 0.025],
        &StartPoint::new(0.0, vec![0.0]),
        &mc(2_000, 50),
        &PicardConfig::default(),
    )
    .unwrap();
    assert!(r.gaps.iter().all(|g| *g <= 1e-4), "{r:?}");
}

#[test]
fn terminal_only_mollification_is_order_eps() {
    let spec = ProblemSpec::builder("call-payoff", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[0.5]))
        .terminal(ScalarField::of_x(|x| (x[0] - 1.0).max(0.0)))
        .radius(6.0)
        .build()
        .unwrap();
    let eps = [0.2, 0.1, 0.05, 0.025];
    let r = mollification_convergence(
        &spec,
        &eps,
        &StartPoint::new(0.0, vec![1.0]),
        &mc(4_000, 50),
        &PicardConfig::default(),
    )
    .unwrap();
    assert!(r.pass);
    // Sweep fit: the constant read off the widest ε bounds the rest.
    let c = r.gaps[0] / eps[0];
    assert!(r.gaps.iter().zip(eps).all(|(g, e)| *g <= c * e * (1.0 + 1e-9)));
}

#[test]
fn mollification_rejects_bad_widths() {
    let spec = library::kinked_drift();
    let run = |eps: &[f64]| {
        mollification_convergence(
            &spec,
            eps,
            &StartPoint::new(0.0, vec![0.0]),
            &mc(100, 10),
            &PicardConfig::default(),
        )
    };
    assert!(matches!(run(&[0.1]), Err(Error::InvalidInput(_))));
    assert!(matches!(run(&[0.1, 0.2]), Err(Error::InvalidInput(_))));
    assert!(matches!(run(&[0.1, 0.0]), Err(Error::InvalidInput(_))));
}

#[test]
fn loglog_slope_of_power_law() {
    let x = [0.2, 0.1, 0.05];
    let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
    assert!((loglog_slope(&x, &y).unwrap() - 1.7).abs() < 1e-12);
    assert_eq!(loglog_slope(&x, &[1.0, 0.0, 1.0]), None);
}

fn space_and_time_offsets() -> Vec<(f64, Vec<f64>)> {
    let mut v: Vec<(f64, Vec<f64>)> = [0.05, 0.1, 0.2, 0.4].iter().map(|d| (0.0, vec![*d])).collect();
    v.extend([0.05, 0.1, 0.2].iter().map(|d| (*d, vec![0.0])));
    v
}

#[test]
fn continuity_deterministic_case() {
    let spec = ProblemSpec::builder("frozen", 1, 1)
        .terminal(ScalarField::of_x(|x| x[0].abs() + 0.5 * x[0]))
        .radius(3.0)
        .build()
        .unwrap();
    let r = continuity_modulus(
        &spec,
        &StartPoint::new(0.0, vec![0.5]),
        &space_and_time_offsets(),
        &mc(200, 20),
        &PicardConfig::default(),
    )
    .unwrap();
    assert!((r.x_exponent.unwrap() - 1.0).abs() < 1e-9, "{r:?}");
    assert_eq!(r.t_exponent, None);
    assert!(r
        .pairs
        .iter()
        .filter(|p| p.direction == Direction::Time)
        .all(|p| p.delta_y == 0.0));
    assert!(r.pass);
}

#[test]
fn continuity_on_heat() {
    let spec = library::heat();
    let r = continuity_modulus(
        &spec,
        &StartPoint::new(0.0, vec![1.0]),
        &space_and_time_offsets(),
        &mc(10_000, 20),
        &PicardConfig::default(),
    )
    .unwrap();
    assert!(r.smooth && r.pass, "{r:?}");
    assert!((r.x_exponent.unwrap() - 1.0).abs() < 0.2);
    assert!((r.t_exponent.unwrap() - 1.0).abs() < 0.3);
}

#[test]
fn continuity_on_random_drift() {
    let spec = library::random_drift();
    let r = continuity_modulus(
        &spec,
        &StartPoint::new(0.0, vec![1.0]),
        &space_and_time_offsets(),
        &mc(10_000, 20),
        &PicardConfig::default(),
    )
    .unwrap();
    assert!(!r.smooth && r.pass);
    assert!(r.x_exponent.unwrap() > 0.2 && r.t_exponent.unwrap() > 0.2);
}

#[test]
fn continuity_rejects_bad_offsets() {
    let spec = library::heat();
    let run = |o: Vec<(f64, Vec<f64>)>| {
        continuity_modulus(
            &spec,
            &StartPoint::new(0.0, vec![0.0]),
            &o,
            &mc(100, 20),
            &PicardConfig::default(),
        )
    };
    assert!(matches!(run(vec![(0.0, vec![0.0])]), Err(Error::InvalidInput(_))));
    assert!(matches!(run(vec![(0.0, vec![2.0])]), Err(Error::Domain(_))));
    assert!(matches!(run(vec![(0.033, vec![0.0])]), Err(Error::InvalidInput(_))));
    assert!(matches!(run(vec![]), Err(Error::InvalidInput(_))));
}

#[test]
fn joint_continuity_of_constant_is_zero() {
    let spec = ProblemSpec::builder("const", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .terminal(ScalarField::constant(2.0))
        .radius(2.0)
        .build()
        .unwrap();
    let u = solve_backward_semilinear_pde(&spec, &pde(0.1, 20), &PicardConfig::default())
        .unwrap()
        .u;
    assert!(joint_continuity_check(&u).normalized < 1e-12);
}

#[test]
fn joint_continuity_on_heat_is_stable() {
    let spec = library::heat();
    let p = PicardConfig::default();
    let coarse = solve_backward_semilinear_pde(&spec, &pde(0.05, 50), &p).unwrap().u;
    let fine = solve_backward_semilinear_pde(&spec, &pde(0.025, 100), &p).unwrap().u;
    let r = joint_continuity_refinement(&coarse, &fine);
    assert!(r.pass, "{r:?}");
}

#[test]
fn joint_continuity_needs_smoothing_for_a_jump() {
    let step = ProblemSpec::builder("step", 1, 1)
        .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
        .terminal(ScalarField::of_x(|x| if x[0] > 0.0 { 1.0 } else { 0.0 }))
        .radius(3.0)
        .build()
        .unwrap();
    let p = PicardConfig::default();
    let solve = |s: &ProblemSpec, h, n| solve_backward_semilinear_pde(s, &pde(h, n), &p).unwrap().u;
    let raw = joint_continuity_refinement(&solve(&step, 0.05, 50), &solve(&step, 0.025, 100));
    assert!(!raw.pass && raw.ratio > 1.5, "{raw:?}");
    let smooth = mollify_spec(&step, 0.25).unwrap();
    let r = joint_continuity_refinement(&solve(&smooth, 0.05, 50), &solve(&smooth, 0.025, 100));
    assert!(r.pass, "{r:?}");
}
