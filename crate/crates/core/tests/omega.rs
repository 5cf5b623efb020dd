mod common;

use common::*;
use nonlocal_core::omega::{audit_monotonicity, predict_for, predictor_index, CONSTRAINT_TOL};
use nonlocal_core::{
    build_model, builtin_model, consistency_check, energy_limit, extract_limit, integrate, AtomField, GFunction,
    Hypothesis, OmegaError, PredictionSource,
};
use proptest::prelude::*;

#[test]
fn stationary_two_valued_field_is_its_own_limit() {
    let tr = run(&[(1.0, 0.5), (2.0, 0.5)], 10.0, 0.1);
    let emp = extract_limit(&tr, &logistic(), 1e-4).unwrap();
    assert_eq!(emp.plateau_values, vec![2.0, 1.0]);
    assert_eq!(emp.plateau_measures, vec![0.5, 0.5]);
    assert_eq!(emp.primary, Some((2.0, 0.5)));
    assert!(emp.deviations.is_empty());
}

#[test]
fn constant_trajectory_has_one_plateau() {
    let tr = integrate(&AtomField::constant(1.4, 2.0).unwrap(), &logistic(), &config(10.0, 0.1)).unwrap();
    let emp = extract_limit(&tr, &logistic(), 1e-4).unwrap();
    assert_eq!(emp.plateau_values, vec![1.4]);
    assert_eq!(emp.plateau_measures, vec![2.0]);
}

#[test]
fn h1_run_agrees_with_prediction() {
    let pair = logistic();
    let tr = run(H1_ATOMS, 200.0, 0.1);
    let emp = extract_limit(&tr, &pair, 1e-4).unwrap();
    let e = energy_limit(&tr).unwrap();
    assert_eq!(Some(e.index), predictor_index(Hypothesis::H1));
    let pred = predict_for(&tr, &pair, e.value).unwrap();
    assert!(pred.mass_residual.abs() <= CONSTRAINT_TOL);
    assert!(pred.energy_residual.abs() <= CONSTRAINT_TOL);
    let report = consistency_check(&pred, &emp, 1e-3).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn h2_run_reports_decomposition() {
    let pair = logistic();
    let tr = run(H2_ATOMS, 200.0, 0.1);
    let emp = extract_limit(&tr, &pair, 1e-4).unwrap();
    assert_eq!(emp.source, PredictionSource::Empirical);
    assert_eq!(emp.hypothesis, Hypothesis::H2);
    assert!(emp.deviations.is_empty());
    for &v in &emp.plateau_values {
        assert!(v.abs() <= 1e-4 || (v - 1.0).abs() <= 1e-4 || (0.0..1.0).contains(&v));
    }
    let total: f64 = emp.plateau_measures.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(matches!(predict_for(&tr, &pair, 0.0), Err(OmegaError::Precondition(_))));
}

#[test]
fn extraction_requires_convergence() {
    let tr = run(H1_ATOMS, 0.5, 0.1);
    assert!(matches!(
        extract_limit(&tr, &logistic(), 1e-4),
        Err(OmegaError::NotConverged { .. })
    ));
}

#[test]
fn h1_prediction_with_a_nonlinear_p() {
    // p = u³ + u: choose μ and a₁, derive the data, recover them.
    let pair = builtin_model("logistic-cubic").unwrap();
    let (mu, a1) = (2.5, 0.4);
    let p = |s: f64| 0.25 * s.powi(4) + 0.5 * s * s;
    let m0 = mu * a1 + (1.0 - a1);
    let e1 = p(mu) * a1 + p(1.0) * (1.0 - a1);
    let pred = nonlocal_core::predict_h1(m0, e1, 1.0, &pair).unwrap();
    let (mu_p, a1_p) = pred.primary.unwrap();
    assert!((mu_p - mu).abs() < 1e-12);
    assert!((a1_p - a1).abs() < 1e-12);
    assert_eq!(pred.plateau_values[1], 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn g_increasing_on_both_sides(c3 in 0.0f64..2.0, c1 in 0.1f64..3.0, k in 0.0f64..1.0) {
        let p = format!("{c3}*u^3 + {c1}*u + {k}*tanh(u)");
        let pair = build_model("u*(1-u)", &p, (-3.0, 3.0)).unwrap();
        let g1 = GFunction::new(&pair, 1.0).unwrap();
        prop_assert!(audit_monotonicity(&g1, 1.0, 50.0, 2_000).unwrap().strictly_increasing);
        let g0 = GFunction::new(&pair, 0.0).unwrap();
        prop_assert!(audit_monotonicity(&g0, -50.0, 0.0, 2_000).unwrap().strictly_increasing);
    }

    #[test]
    fn h3_residuals_within_tolerance(xi in -20.0f64..-0.05, a1 in 0.05f64..1.0, measure in 0.5f64..3.0) {
        let pair = builtin_model("logistic-cubic").unwrap();
        let a1 = a1 * measure;
        let m0 = xi * a1;
        let e3 = (0.25 * xi.powi(4) + 0.5 * xi * xi) * a1;
        let pred = nonlocal_core::predict_h3(m0, e3, measure, &pair).unwrap();
        prop_assert!(pred.mass_residual.abs() <= CONSTRAINT_TOL * m0.abs().max(1.0));
        prop_assert!(pred.energy_residual.abs() <= CONSTRAINT_TOL * e3.abs().max(1.0));
        let (xi_p, _) = pred.primary.unwrap();
        prop_assert!(xi_p < 0.0);
    }
}
