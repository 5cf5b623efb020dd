mod common;

use common::*;
use nonlocal_core::energy::{dissipation_constant, dissipation_rate, integrate_samples, lyapunov, LyapunovIndex};
use nonlocal_core::{classify_hypothesis, energy_limit, AtomField, EnergyError};
use proptest::prelude::*;

#[test]
fn energy_limit_matches_final_energy() {
    let tr = run(H3_ATOMS, 200.0, 0.1);
    let e = energy_limit(&tr).unwrap();
    assert_eq!(e.index, LyapunovIndex::Three);
    assert_eq!(e.value, *tr.energy_series.last().unwrap());
    assert!(e.error_bar >= 0.0 && e.error_bar < 1e-9);
    // the constant limit -0.6 has E₃ = 𝒫(-0.6) = 0.18
    assert!((e.value - 0.18).abs() < 1e-8);
}

#[test]
fn energy_limit_rejects_unconverged_runs() {
    let tr = run(H3_ATOMS, 0.3, 0.1);
    assert!(matches!(energy_limit(&tr), Err(EnergyError::NotConverged { .. })));
}

#[test]
fn recorded_dissipation_matches_energy_drop() {
    let tr = run(H2_ATOMS, 200.0, 0.01);
    let drop = tr.energy_series[0] - tr.energy_series[tr.len() - 1];
    let integrated = integrate_samples(&tr.times, &tr.dissipation_series);
    assert!((drop + integrated).abs() <= 1e-6 * drop.abs());
}

#[test]
fn dissipation_constant_for_h1() {
    let u0 = field(H1_ATOMS);
    let hyp = classify_hypothesis(&u0, &logistic());
    // min g on [1, 2] is g(2) = -2
    let c = dissipation_constant(&hyp, &logistic()).unwrap();
    assert!((c - 0.5).abs() < 1e-9);
}

proptest! {
    #[test]
    fn dissipation_nonpositive_in_invariant_regions(
        (atoms, index) in prop_oneof![
            prop::collection::vec((1.0f64..3.0, 0.05f64..1.0), 1..6).prop_map(|a| (a, LyapunovIndex::One)),
            prop::collection::vec((0.01f64..0.99, 0.05f64..1.0), 1..6).prop_map(|a| (a, LyapunovIndex::Two)),
            prop::collection::vec((-3.0f64..-0.01, 0.05f64..1.0), 1..6).prop_map(|a| (a, LyapunovIndex::Three)),
        ]
    ) {
        let u = AtomField::from_atoms(&atoms, atoms.iter().map(|a| a.1).sum()).unwrap();
        let pair = logistic();
        let Ok(d) = dissipation_rate(&u, &pair, index, 1e-14) else { return Ok(()); };
        prop_assert!(d <= 1e-12);
        prop_assert!(lyapunov(&u, &pair, index).unwrap().is_finite());
    }
}
