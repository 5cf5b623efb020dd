mod common;

use nonlocal_core::expr::{BinaryOp, UnaryOp};
use nonlocal_core::{differentiate, parse, simplify, Expr};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::Var),
        (-1e6f64..1e6).prop_map(Expr::Const),
        (-1e-6f64..1e-6).prop_map(Expr::Const),
        any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Expr::Const),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        let unary = prop_oneof![
            Just(UnaryOp::Neg),
            Just(UnaryOp::Exp),
            Just(UnaryOp::Log),
            Just(UnaryOp::Tanh),
            Just(UnaryOp::Sin),
            Just(UnaryOp::Cos)
        ];
        let binary = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div)
        ];
        prop_oneof![
            (unary, inner.clone()).prop_map(|(op, a)| Expr::Unary(op, Box::new(a))),
            (binary, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
            (inner, -4.0f64..4.0).prop_map(|(a, k)| Expr::Binary(BinaryOp::Pow, Box::new(a), Box::new(Expr::Const(k)))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn unparse_reparses_to_the_same_tree(e in tree()) {
        let first = parse(&e.to_string()).unwrap();
        let second = parse(&first.to_string()).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(first.to_string(), second.to_string());
    }

    #[test]
    fn parser_is_total(s in "[-+*/^() .0-9eu a-z]{0,40}") {
        let _ = parse(&s);
    }

    #[test]
    fn parser_is_total_on_arbitrary_text(s in any::<String>()) {
        let _ = parse(&s);
    }

    #[test]
    fn derivative_matches_central_differences(seed in any::<u64>(), u in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = common::random_expr(&mut rng, 3);
        let e = parse(&text).unwrap();
        let d = differentiate(&e);
        let h = 1e-6;
        let fd = (e.eval(u + h).unwrap() - e.eval(u - h).unwrap()) / (2.0 * h);
        let exact = d.eval(u).unwrap();
        prop_assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0), "{text}: {exact} vs {fd}");
    }

    #[test]
    fn simplify_preserves_values(seed in any::<u64>(), u in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = parse(&common::random_expr(&mut rng, 3)).unwrap();
        let s = simplify(&e);
        let (a, b) = (e.eval(u).unwrap(), s.eval(u).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(s.size() <= e.size());
    }
}

#[test]
fn derivative_rules_by_hand() {
    let cases: &[(&str, &str, f64, f64)] = &[
        ("exp(2*u)", "2*exp(2*u)", 0.3, 2.0 * (0.6f64).exp()),
        ("log(u)", "1/u", 2.0, 0.5),
        ("sin(u)", "cos(u)", 0.0, 1.0),
        ("cos(u)", "-sin(u)", 0.0, 0.0),
        ("tanh(u)", "1-tanh(u)^2", 0.0, 1.0),
        ("1/u", "(-1)/u^2", 2.0, -0.25),
        ("u^3", "3*u^2", 2.0, 12.0),
    ];
    for &(text, printed, u, value) in cases {
        let d = differentiate(&parse(text).unwrap());
        assert_eq!(d.to_string(), printed, "{text}");
        assert!((d.eval(u).unwrap() - value).abs() < 1e-14, "{text}");
    }
}
