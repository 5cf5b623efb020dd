//! Lyapunov functionals `E_i(u) = (-1)^{i+1} ∫ 𝒫(u)` and their dissipation.

use std::fmt;

use thiserror::Error;

use crate::dynamics::{Termination, Trajectory};
use crate::field::AtomField;
use crate::model::{Hypothesis, HypothesisClass, LambdaParts, ModelError, NonlinearityPair};

/// Sampling density of the minimisation behind [`dissipation_constant`].
pub const DISSIPATION_GRID: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("dissipation constant unavailable: {0}")]
    Unavailable(&'static str),
    #[error("trajectory not near-stationary: max |rate| = {max_rate:e} at t = {t}")]
    NotConverged { max_rate: f64, t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Index `i ∈ {1, 2, 3}` of the functional; it fixes the sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LyapunovIndex {
    One,
    Two,
    Three,
}

impl LyapunovIndex {
    /// The index matching a hypothesis. Fields with no hypothesis get `One`
    /// (diagnostic only: no monotonicity is guaranteed then).
    pub fn for_hypothesis(tag: Hypothesis) -> Self {
        match tag {
            Hypothesis::H2 => LyapunovIndex::Two,
            Hypothesis::H3 => LyapunovIndex::Three,
            Hypothesis::H1 | Hypothesis::None => LyapunovIndex::One,
        }
    }

    pub fn from_number(i: u8) -> Option<Self> {
        match i {
            1 => Some(LyapunovIndex::One),
            2 => Some(LyapunovIndex::Two),
            3 => Some(LyapunovIndex::Three),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            LyapunovIndex::One => 1,
            LyapunovIndex::Two => 2,
            LyapunovIndex::Three => 3,
        }
    }

    /// `(-1)^{i+1}`.
    pub fn sign(self) -> f64 {
        match self {
            LyapunovIndex::Two => -1.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for LyapunovIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.number())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRecord {
    pub index: LyapunovIndex,
    pub value: f64,
    /// `dE_i/dt`.
    pub dissipation: f64,
    /// `None` where no constant exists (H2, degenerate ranges).
    pub c_constant: Option<f64>,
}

pub fn lyapunov(u: &AtomField, pair: &NonlinearityPair, i: LyapunovIndex) -> Result<f64, ModelError> {
    lyapunov_slices(u.values(), u.weights(), pair, i)
}

pub(crate) fn lyapunov_slices(
    values: &[f64],
    weights: &[f64],
    pair: &NonlinearityPair,
    i: LyapunovIndex,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (&s, &m) in values.iter().zip(weights) {
        total += m * pair.antiderivative(s)?;
    }
    Ok(i.sign() * total)
}

/// `dE_i/dt = (-1)^{i+1} Σ mⱼ g(sⱼ)(p(sⱼ) - λ)²`.
pub fn dissipation_rate(
    u: &AtomField,
    pair: &NonlinearityPair,
    i: LyapunovIndex,
    eps_den: f64,
) -> Result<f64, ModelError> {
    let lambda = LambdaParts::compute(u.values(), u.weights(), pair).lambda(eps_den)?;
    Ok(dissipation_given_lambda(u.values(), u.weights(), pair, i, lambda))
}

pub(crate) fn dissipation_given_lambda(
    values: &[f64],
    weights: &[f64],
    pair: &NonlinearityPair,
    i: LyapunovIndex,
    lambda: f64,
) -> f64 {
    let sum: f64 = values
        .iter()
        .zip(weights)
        .map(|(&s, &m)| {
            let d = pair.p(s) - lambda;
            m * pair.g(s) * d * d
        })
        .sum();
    i.sign() * sum
}

/// `C = -1 / min g` over the invariant region, so that `g ≤ -C g²` there.
///
/// H1 uses `[1, b]`, H3 uses `[a, 0]`. H2 has no such constant: `g` vanishes
/// at both ends of `[0, 1]`.
pub fn dissipation_constant(hyp: &HypothesisClass, pair: &NonlinearityPair) -> Result<f64, EnergyError> {
    let (lo, hi) = match hyp.tag {
        Hypothesis::H1 => (1.0, hyp.esssup_b),
        Hypothesis::H3 => (hyp.essinf_a, 0.0),
        Hypothesis::H2 => return Err(EnergyError::Unavailable("g vanishes at both ends of [0, 1]")),
        Hypothesis::None => return Err(EnergyError::Unavailable("no hypothesis holds")),
    };
    if !(hi > lo) {
        return Err(EnergyError::Unavailable("degenerate invariant interval"));
    }
    let n = DISSIPATION_GRID;
    let min_g = (0..=n)
        .map(|k| pair.g(lo + (hi - lo) * k as f64 / n as f64))
        .fold(f64::INFINITY, f64::min);
    if !(min_g < 0.0) {
        return Err(EnergyError::Unavailable("g does not go negative on the interval"));
    }
    Ok(-1.0 / min_g)
}

/// Estimate of `E_{i∞}` with an error bar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyLimit {
    pub value: f64,
    /// Spread of the energy over the last tenth of the recorded time span.
    pub error_bar: f64,
    pub index: LyapunovIndex,
}

/// Final-snapshot energy of a near-stationary trajectory.
pub fn energy_limit(tr: &Trajectory) -> Result<EnergyLimit, EnergyError> {
    let t_end = *tr.times.last().unwrap_or(&0.0);
    let converged = tr.termination == Termination::Stationary || tr.final_max_rate < 100.0 * tr.stat_tol;
    if !converged {
        return Err(EnergyError::NotConverged {
            max_rate: tr.final_max_rate,
            t: t_end,
        });
    }
    let value = *tr.energy_series.last().expect("trajectory has at least one snapshot");
    let cutoff = 0.9 * t_end;
    let (lo, hi) = tr
        .times
        .iter()
        .zip(&tr.energy_series)
        .filter(|(&t, _)| t >= cutoff)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &e)| (lo.min(e), hi.max(e)));
    Ok(EnergyLimit {
        value,
        error_bar: hi - lo,
        index: tr.energy_index,
    })
}

/// `∫ rate dt` over recorded samples by composite Simpson on a possibly
/// non-uniform grid. An odd interval left at the end is integrated with the
/// quadratic through the last three samples. Fewer than three samples fall
/// back to the trapezoid rule.
pub fn integrate_samples(times: &[f64], rates: &[f64]) -> f64 {
    let n = times.len().min(rates.len());
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (times[1] - times[0]) * (rates[0] + rates[1]);
    }
    let mut total = 0.0;
    let mut k = 0;
    while k + 2 < n {
        let (h0, h1) = (times[k + 1] - times[k], times[k + 2] - times[k + 1]);
        let (f0, f1, f2) = (rates[k], rates[k + 1], rates[k + 2]);
        total += (h0 + h1) / 6.0
            * ((2.0 - h1 / h0) * f0 + (h0 + h1) * (h0 + h1) / (h0 * h1) * f1 + (2.0 - h0 / h1) * f2);
        k += 2;
    }
    if k + 1 < n {
        // quadratic through the last three samples, integrated over the last
        // interval only
        let (h0, h1) = (times[n - 2] - times[n - 3], times[n - 1] - times[n - 2]);
        let (f0, f1, f2) = (rates[n - 3], rates[n - 2], rates[n - 1]);
        let b = ((f2 - f1) / h1 + (f0 - f1) / h0) / (h0 + h1);
        let a = (f2 - f1) / h1 - b * h1;
        total += h1 * f1 + a * h1 * h1 / 2.0 + b * h1 * h1 * h1 / 3.0;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, classify_hypothesis};

    fn logistic() -> NonlinearityPair {
        builtin_model("logistic-identity").unwrap()
    }

    fn f(atoms: &[(f64, f64)]) -> AtomField {
        AtomField::from_atoms(atoms, atoms.iter().map(|a| a.1).sum()).unwrap()
    }

    #[test]
    fn lyapunov_examples() {
        let m = logistic();
        let two = AtomField::constant(2.0, 1.0).unwrap();
        assert_eq!(lyapunov(&two, &m, LyapunovIndex::One).unwrap(), 2.0);
        let zero = AtomField::constant(0.0, 1.0).unwrap();
        assert_eq!(lyapunov(&zero, &m, LyapunovIndex::Two).unwrap(), 0.0);
        let u = f(&[(0.3, 0.5), (0.7, 0.5)]);
        assert_eq!(
            lyapunov(&u, &m, LyapunovIndex::Two).unwrap(),
            -lyapunov(&u, &m, LyapunovIndex::One).unwrap()
        );
    }

    #[test]
    fn dissipation_examples() {
        let m = logistic();
        let stat = f(&[(1.0, 0.5), (2.0, 0.5)]);
        assert_eq!(dissipation_rate(&stat, &m, LyapunovIndex::One, 1e-14).unwrap(), 0.0);

        let h1 = f(&[(1.5, 0.5), (2.0, 0.5)]);
        let d = dissipation_rate(&h1, &m, LyapunovIndex::One, 1e-14).unwrap();
        let lambda: f64 = (0.5 * -0.75 * 1.5 + 0.5 * -2.0 * 2.0) / (0.5 * -0.75 + 0.5 * -2.0);
        let expected = 0.5 * -0.75 * (1.5 - lambda).powi(2) + 0.5 * -2.0 * (2.0 - lambda).powi(2);
        assert!((d - expected).abs() < 1e-15);
        assert!(d < 0.0);

        let h2 = f(&[(0.3, 0.5), (0.7, 0.5)]);
        let d2 = dissipation_rate(&h2, &m, LyapunovIndex::Two, 1e-14).unwrap();
        // λ = 0.5 by symmetry; Σ m g (p-λ)² = 0.21 * 0.04
        assert!((d2 + 0.21 * 0.04).abs() < 1e-15);
    }

    fn dense_min(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        (0..=200_000)
            .map(|k| g(lo + (hi - lo) * k as f64 / 200_000.0))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn dissipation_constant_examples() {
        let m = logistic();
        let h1 = classify_hypothesis(&f(&[(1.5, 0.5), (2.0, 0.5)]), &m);
        let c = dissipation_constant(&h1, &m).unwrap();
        let oracle = -1.0 / dense_min(|s| s * (1.0 - s), 1.0, 2.0);
        assert!((c - oracle).abs() < 1e-12);
        assert!((c - 0.5).abs() < 1e-12);

        let h3 = classify_hypothesis(&f(&[(-1.0, 0.5), (-0.2, 0.5)]), &m);
        assert!((dissipation_constant(&h3, &m).unwrap() - 0.5).abs() < 1e-12);

        let near = HypothesisClass {
            tag: Hypothesis::H1,
            essinf_a: 1.0,
            esssup_b: 1.0 + 1e-6,
            integral_g_u0: -1e-6,
        };
        assert!(dissipation_constant(&near, &m).unwrap() > 1e5);
        let flat = HypothesisClass {
            esssup_b: 1.0,
            ..near
        };
        assert!(matches!(dissipation_constant(&flat, &m), Err(EnergyError::Unavailable(_))));

        let h2 = classify_hypothesis(&f(&[(0.3, 0.5), (0.7, 0.5)]), &m);
        assert!(matches!(dissipation_constant(&h2, &m), Err(EnergyError::Unavailable(_))));
    }

    #[test]
    fn sample_integration_exact_for_quadratics() {
        let f = |t: f64| 3.0 * t * t - t + 2.0;
        let exact = |t: f64| t * t * t - 0.5 * t * t + 2.0 * t;
        for times in [
            vec![0.0, 0.1, 0.35, 0.4, 1.0],
            vec![0.0, 0.2, 0.3, 0.9],
            vec![0.0, 0.5, 1.5],
        ] {
            let rates: Vec<f64> = times.iter().map(|&t| f(t)).collect();
            let want = exact(*times.last().unwrap());
            assert!((integrate_samples(&times, &rates) - want).abs() < 1e-13);
        }
        assert_eq!(integrate_samples(&[0.0, 2.0], &[1.0, 3.0]), 4.0);
        assert_eq!(integrate_samples(&[1.0], &[1.0]), 0.0);
    }
}
