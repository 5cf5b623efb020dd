use nonlocal_core::model::{lipschitz_bound, rates_into};
use nonlocal_core::{builtin_model, lambda_of, rhs, AtomField, BUILTIN_MODELS};
use proptest::prelude::*;

fn field_strategy() -> impl Strategy<Value = AtomField> {
    prop::collection::vec((-1.5f64..2.5, 0.01f64..1.0), 1..8)
        .prop_map(|a| AtomField::from_atoms(&a, a.iter().map(|x| x.1).sum()).unwrap())
}

proptest! {
    #[test]
    fn rates_sum_to_zero(u in field_strategy(), k in 0usize..3) {
        let pair = builtin_model(BUILTIN_MODELS[k]).unwrap();
        let Ok(r) = rhs(&u, &pair, 1e-12) else { return Ok(()); };
        let lambda = lambda_of(&u, &pair, 1e-12).unwrap();
        let weighted: f64 = r.iter().zip(u.weights()).map(|(a, m)| a * m).sum();
        // size of the two sums that cancel: ∫|g p| and |λ| ∫|g|
        let scale: f64 = u.atoms().map(|(s, m)| m * (pair.g(s) * pair.p(s)).abs() + m * lambda.abs() * pair.g(s).abs()).sum();
        prop_assert!(weighted.abs() <= 1e-13 * scale);
    }

    #[test]
    fn stationary_iff_zero_of_g_or_level_of_p(v in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), Just(2.0), 1.2f64..3.0], 1..5)) {
        let pair = builtin_model("logistic-identity").unwrap();
        let atoms: Vec<(f64, f64)> = v.iter().map(|&s| (s, 0.25)).collect();
        let u = AtomField::from_atoms(&atoms, 0.25 * atoms.len() as f64).unwrap();
        let Ok(lambda) = lambda_of(&u, &pair, 1e-12) else { return Ok(()); };
        let r = rhs(&u, &pair, 1e-12).unwrap();
        let all_zero = r.iter().all(|x| x.abs() <= 1e-12);
        let scan = u.values().iter().all(|&s| pair.g(s).abs() <= 1e-15 || (s - lambda).abs() <= 1e-12);
        prop_assert_eq!(all_zero, scan);
    }

    #[test]
    fn h1_lambda_bound(v in prop::collection::vec((1.0f64..4.0, 0.01f64..1.0), 1..8)) {
        prop_assume!(v.iter().any(|x| x.0 > 1.0));
        let pair = builtin_model("logistic-cubic").unwrap();
        let u = AtomField::from_atoms(&v, v.iter().map(|x| x.1).sum()).unwrap();
        let b = u.max_value();
        let lambda = lambda_of(&u, &pair, 1e-14).unwrap();
        prop_assert!(lambda.abs() <= pair.p(1.0).abs().max(pair.p(b).abs()) * (1.0 + 1e-12));
    }

    #[test]
    fn lipschitz_identity(c in 0.1f64..0.9, r in 0.001f64..0.05) {
        let pair = builtin_model("logistic-identity").unwrap();
        let u = AtomField::constant(c, 1.0).unwrap();
        // α is a lower bound of |∫g| over the ball; large balls are rejected
        let Ok(est) = lipschitz_bound(&u, &pair, r) else { return Ok(()); };
        prop_assert!(est.alpha > 0.0);
        prop_assert_eq!(est.l, est.k + 3.0 * est.k.powi(3) / (est.alpha * est.alpha));
    }
}

#[test]
fn rates_into_matches_rhs() {
    let pair = builtin_model("logistic-identity").unwrap();
    let u = AtomField::from_atoms(&[(2.0, 0.5), (1.5, 0.5)], 1.0).unwrap();
    let mut out = vec![0.0; 2];
    let lambda = rates_into(u.values(), u.weights(), 1.0, &pair, None, &mut out).unwrap();
    assert_eq!(out, rhs(&u, &pair, 1e-12).unwrap());
    assert_eq!(lambda, lambda_of(&u, &pair, 1e-12).unwrap());
}
