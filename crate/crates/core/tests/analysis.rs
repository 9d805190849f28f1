mod common;

use std::f64::consts::{PI, SQRT_2};

use chemobound::analysis::*;
use chemobound::geometry::GeometryConstants;
use chemobound::params::ModelParams;
use chemobound::trajectory::{TerminalStatus, Trajectory, TrajectoryRecord};
use common::odi_time_by_quadrature;
use proptest::prelude::*;

fn unit_disk() -> GeometryConstants {
    GeometryConstants { rho0: 1.0, d: 1.0, m1: 1.5, m2: 2.0, area: PI, perimeter: 2.0 * PI }
}

fn geom(rho0: f64, d: f64) -> GeometryConstants {
    GeometryConstants { rho0, d, m1: 1.5 / rho0, m2: 1.0 + d / rho0, area: 1.0, perimeter: 1.0 }
}

fn params() -> impl Strategy<Value = ModelParams> {
    (0.1..5.0f64, 0.1..5.0f64, 0.1..5.0f64, 0.1..5.0f64, 0.1..5.0f64, 0.1..5.0f64)
        .prop_map(|(a, b, g, d, c, x)| ModelParams::new(a, b, g, d, c, x).unwrap())
}

fn record(t: f64, energy: f64) -> TrajectoryRecord {
    TrajectoryRecord {
        t,
        energy,
        mass: 1.0,
        u_max: 1.0,
        u_min: 0.0,
        dedt_numeric: 0.0,
        odi_rhs: 0.0,
        odi_margin: 0.0,
        dt: 0.0,
        v_mass: 1.0,
        w_mass: 1.0,
        energy_identity_rhs: 0.0,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn implicit_matches_quadrature(a in 0.01..10.0f64, b in 0.01..10.0f64, e0 in 1e-3..1e3f64, k in 1.0..1e4f64) {
        let et = e0 * k;
        let t = lower_bound_implicit(a, b, e0, et).unwrap();
        prop_assert!(rel(t, odi_time_by_quadrature(a, b, e0, et)) < 1e-8);
        let t_inf = lower_bound_implicit(a, b, e0, f64::INFINITY).unwrap();
        prop_assert!(rel(t_inf, odi_time_by_quadrature(a, b, e0, f64::INFINITY)) < 1e-8);
    }

    #[test]
    fn implicit_monotone(a in 0.01..10.0f64, b in 0.0..10.0f64, e0 in 1e-3..1e3f64, k in 1.0..1e3f64, s in 1.01..10.0f64) {
        let t = |e0: f64, et: f64| lower_bound_implicit(a, b, e0, et).unwrap();
        prop_assert!(t(e0 * s, f64::INFINITY) <= t(e0, f64::INFINITY));
        prop_assert!(t(e0, e0 * k) <= t(e0, e0 * k * s));
        prop_assert!(t(e0, e0 * k) <= t(e0, f64::INFINITY));
        prop_assert_eq!(t(e0, e0), 0.0);
    }

    #[test]
    fn implicit_below_explicit(a in 0.01..10.0f64, b in 0.0..10.0f64, e0 in 1e-3..1e3f64) {
        let imp = lower_bound_implicit(a, b, e0, f64::INFINITY).unwrap();
        let exp = lower_bound_explicit(a, e0).unwrap();
        prop_assert!(imp <= exp * (1.0 + 1e-14));
        prop_assert!(imp > 0.0);
    }

    #[test]
    fn implicit_reaches_explicit_as_b_vanishes(a in 0.01..10.0f64, e0 in 1e-3..1e3f64) {
        let exp = lower_bound_explicit(a, e0).unwrap();
        prop_assert!(rel(lower_bound_implicit(a, 0.0, e0, f64::INFINITY).unwrap(), exp) < 1e-15);
        // Relative gap is about eps ln(1/eps) with eps = B sqrt(E0) / A.
        let near = lower_bound_implicit(a, 1e-12 * a / e0.sqrt(), e0, f64::INFINITY).unwrap();
        prop_assert!(near <= exp && rel(near, exp) < 1e-9);
    }

    #[test]
    fn closed_forms_match_general_epsilon(p in params(), ctilde in 0.0..10.0f64, rho0 in 0.1..3.0f64, f in 1.0..4.0f64) {
        let g = geom(rho0, f * rho0);
        let ab = constants_ab(&p, &g, ctilde).unwrap();
        let (c1, c2) = intermediate_constants(&p, ctilde, default_epsilon(&p)).unwrap();
        prop_assert!(rel(ab.ctilde1, c1) < 1e-14);
        prop_assert!(ctilde == 0.0 || rel(ab.ctilde2, c2) < 1e-14);
        let ge = constants_ab_with_epsilon(&p, &g, ctilde, default_epsilon(&p)).unwrap();
        prop_assert!(rel(ge.a, ab.a) < 1e-14 && rel(ge.b, ab.b) < 1e-14);
        prop_assert_eq!(residual_gradient_coefficient(ab.ctilde1, ab.c1), 0.0);
        let hand = ab.ctilde1 * SQRT_2 / 3.0 * g.m1 + ab.ctilde2;
        prop_assert!(rel(ab.a, hand) < 1e-14);
        prop_assert!(rel(ab.b, ab.ctilde1.powi(2) * g.m2.powi(2) / 16.0) < 1e-14);
    }

    #[test]
    fn minimised_a_not_above_default(p in params(), ctilde in 0.0..10.0f64) {
        let g = unit_disk();
        let best = minimize_a_over_epsilon(&p, &g, ctilde).unwrap();
        let base = constants_ab(&p, &g, ctilde).unwrap();
        prop_assert!(best.a <= base.a * (1.0 + 1e-12));
    }
}

#[test]
fn implicit_limits_against_quadrature() {
    for et in [1e6, 1e8, 1e10] {
        let t = lower_bound_implicit(0.925093, 0.301821, 1.0, et).unwrap();
        assert!(rel(t, odi_time_by_quadrature(0.925093, 0.301821, 1.0, et)) < 1e-9, "{et}");
    }
    let t_inf = lower_bound_implicit(0.925093, 0.301821, 1.0, f64::INFINITY).unwrap();
    let t10 = lower_bound_implicit(0.925093, 0.301821, 1.0, 1e10).unwrap();
    assert!(t_inf > t10 && t_inf - t10 < 2.0 / 0.925093 * 1e-5 + 1e-12);
}

#[test]
fn implicit_unit_value() {
    let t = lower_bound_implicit(1.0, 1.0, 1.0, f64::INFINITY).unwrap();
    assert!((t - (2.0 - 2.0 * 2f64.ln())).abs() < 1e-9);
    assert!((t - 0.613706).abs() < 1e-6);
}

#[test]
fn all_ones_on_unit_disk() {
    let ab = constants_ab(&ModelParams::ones(), &unit_disk(), 1.0).unwrap();
    assert!((ab.ctilde1 - 89.0 / 81.0).abs() < 1e-15);
    assert!((ab.ctilde2 - 4.0 / 27.0).abs() < 1e-15);
    assert!((ab.a - 0.925094).abs() < 1e-5, "{}", ab.a);
    assert!((ab.b - 0.301822).abs() < 1e-5, "{}", ab.b);
    // Hand evaluation of the variant with the ctilde terms inside the bracket.
    let term: f64 = 1.0 / 3.0 * (1.5f64).powi(-2);
    assert!((ab.a_theorem_variant - ((1.0 + term) * SQRT_2 / 3.0 * 1.5 + term)).abs() < 1e-15);
    let t = lower_bound_explicit(ab.a, PI).unwrap();
    assert!((t - 1.219747).abs() < 1e-5, "{t}");
}

#[test]
fn repulsion_free_limit() {
    let p = ModelParams::new(1.3, 1.0, 1.0, 1.0, 2.0, 1e-12).unwrap();
    let ab = constants_ab(&p, &unit_disk(), 5.0).unwrap();
    assert!((ab.a - 2.6 * SQRT_2 / 3.0 * 1.5).abs() < 1e-10);
    assert!((ab.b - 2.6f64.powi(2) * 4.0 / 16.0).abs() < 1e-10);
}

#[test]
fn doubling_m1_raises_a() {
    let p = ModelParams::ones();
    let g1 = unit_disk();
    let g2 = GeometryConstants { m1: 3.0, ..g1 };
    let (a1, a2) = (constants_ab(&p, &g1, 1.0).unwrap(), constants_ab(&p, &g2, 1.0).unwrap());
    assert!(((a2.a - a1.a) - a1.ctilde1 * SQRT_2 / 3.0 * 1.5).abs() < 1e-14);
    assert_eq!(a1.b, a2.b);
}

#[test]
fn critical_mass_examples() {
    let p = |chi: f64, xi: f64| ModelParams::new(1.0, 1.0, 1.0, 1.0, chi, xi).unwrap();
    assert!((critical_mass(&p(2.0, 1.0)).unwrap() - 4.0 * PI).abs() < 1e-14);
    assert_eq!(critical_mass(&p(1.0, 1.0)), None);
    assert_eq!(critical_mass(&p(0.5, 1.0)), None);
}

#[test]
fn argument_errors() {
    assert_eq!(lower_bound_explicit(0.0, 1.0), Err(AnalysisError::NonPositiveA(0.0)));
    assert_eq!(lower_bound_explicit(1.0, 0.0), Err(AnalysisError::NonPositiveEnergy(0.0)));
    assert_eq!(lower_bound_implicit(1.0, -1.0, 1.0, 2.0), Err(AnalysisError::NegativeB(-1.0)));
    assert!(matches!(lower_bound_implicit(1.0, 1.0, 2.0, 1.0), Err(AnalysisError::TargetBelowInitial { .. })));
    assert!(matches!(intermediate_constants(&ModelParams::ones(), 1.0, 0.0), Err(AnalysisError::NonPositiveEpsilon(_))));
    assert!(matches!(constants_ab(&ModelParams::ones(), &unit_disk(), -1.0), Err(AnalysisError::NegativeCtilde(_))));
}

#[test]
fn bound_report_contents() {
    let src = CtildeSource::User(1.0);
    assert_eq!(
        bound_report(&ModelParams::ones(), &unit_disk(), &src, 0.0).unwrap_err(),
        AnalysisError::NonPositiveEnergy(0.0)
    );
    let r = bound_report(&ModelParams::ones(), &unit_disk(), &src, 1.0).unwrap();
    assert!(r.out_of_regime && r.critical_mass.is_none());
    assert!(r.t_lower_implicit <= r.t_lower_explicit);
    let kv = r.to_key_value();
    assert!(kv.contains("out_of_regime=true"));
    assert_eq!(r.csv_row().split(',').count(), BOUND_CSV_COLUMNS.split(',').count());
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 2.0, 1.0).unwrap();
    let est = CtildeSource::Estimated { value: 0.5, n_trials: 10, seed: 7, safety_factor: 2.0 };
    let r = bound_report(&p, &unit_disk(), &est, 2.0).unwrap();
    assert!(!r.out_of_regime);
    assert!(r.ctilde_provenance.contains("seed=7") || r.ctilde_provenance.contains('7'));
}

#[test]
fn odi_check_on_synthetic_trajectories() {
    let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.01).collect();
    let constant = Trajectory::from_records(times.iter().map(|&t| record(t, 2.0)).collect(), TerminalStatus::Completed);
    let rep = check_odi(&constant, 1.0, 1.0, 1e-6);
    assert!(rep.passed() && rep.n_checked == 48 && rep.compliant_fraction == 1.0);

    let decreasing =
        Trajectory::from_records(times.iter().map(|&t| record(t, 2.0 * (-t).exp())).collect(), TerminalStatus::Completed);
    assert!(check_odi(&decreasing, 1e-3, 0.0, 0.0).passed());

    // Exact solution of E' = A E^{3/2}: equality up to differencing error.
    let a = 1.0;
    let exact = |t: f64| (1.0 - a * t / 2.0).powi(-2);
    let traj = Trajectory::from_records(times.iter().map(|&t| record(t, exact(t))).collect(), TerminalStatus::Completed);
    assert!(check_odi(&traj, a, 0.0, 1e-3).passed());
    let rep = check_odi(&traj, 0.5 * a, 0.0, 1e-3);
    assert!(!rep.passed() && rep.first_violation_time == Some(0.01) && rep.compliant_fraction == 0.0);
    assert_eq!(check_odi(&Trajectory::from_records(vec![record(0.0, 1.0)], TerminalStatus::Completed), 1.0, 1.0, 0.0).n_checked, 0);
}
