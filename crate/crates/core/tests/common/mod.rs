//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nonlocal_core::{builtin_model, integrate, AtomField, IntegratorConfig, NonlinearityPair, Trajectory};
use rand::Rng;

pub const H1_ATOMS: &[(f64, f64)] = &[(2.0, 0.5), (1.5, 0.5)];
pub const H2_ATOMS: &[(f64, f64)] = &[(0.7, 0.5), (0.3, 0.5)];
pub const H3_ATOMS: &[(f64, f64)] = &[(-0.2, 0.5), (-1.0, 0.5)];
/// Mixed-sign data for the cubic model whose `∫g(u)` reaches zero in finite
/// time.
pub const GUARD_ATOMS: &[(f64, f64)] = &[(1.3, 0.106), (0.5, 0.53), (-0.2, 0.364)];

pub fn logistic() -> NonlinearityPair {
    builtin_model("logistic-identity").unwrap()
}

pub fn field(atoms: &[(f64, f64)]) -> AtomField {
    AtomField::from_atoms(atoms, atoms.iter().map(|a| a.1).sum()).unwrap()
}

pub fn config(t_max: f64, record_every: f64) -> IntegratorConfig {
    IntegratorConfig {
        t_max,
        record_every,
        ..IntegratorConfig::default()
    }
}

pub fn run(atoms: &[(f64, f64)], t_max: f64, record_every: f64) -> Trajectory {
    integrate(&field(atoms), &logistic(), &config(t_max, record_every)).unwrap()
}

/// Random expression text in `u`, bounded and smooth on `[-2, 2]` so that
/// central differences with step `1e-6` are well conditioned.
pub fn random_expr<R: Rng>(rng: &mut R, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.2) {
        return if rng.gen_bool(0.6) {
            "u".to_owned()
        } else {
            let c: f64 = rng.gen_range(-2.0..2.0);
            format!("{:.3}", c)
        };
    }
    let a = random_expr(rng, depth - 1);
    match rng.gen_range(0..12) {
        0 => format!("{a} + {}", random_expr(rng, depth - 1)),
        1 => format!("({a}) - ({})", random_expr(rng, depth - 1)),
        2 => format!("({a}) * ({})", random_expr(rng, depth - 1)),
        3 => format!("({a}) / (1.5 + ({})^2)", random_expr(rng, depth - 1)),
        4 => format!("({a})^{}", rng.gen_range(2..=3)),
        5 => format!("tanh({a})"),
        6 => format!("sin({a})"),
        7 => format!("cos({a})"),
        8 => format!("exp(tanh({a}))"),
        9 => format!("log(1 + ({a})^2)"),
        10 => format!("-({a})"),
        _ => format!("(1 + ({a})^2)^0.5"),
    }
}
