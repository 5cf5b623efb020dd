//! Limit step functions of the flow.
//!
//! Under H1 every limit has the form `μ χ_{A₁} + χ_{Ω∖A₁}` with `μ > 1`;
//! under H3 it is `ξ χ_{A₁}` with `ξ < 0`. Mass conservation and the limit
//! energy give two equations for `(μ, |A₁|)`; eliminating `|A₁|` leaves
//!
//! ```text
//! 𝒢(μ) = (E₁∞ - 𝒫(1)|Ω|) / (m₀ - |Ω|),    𝒢(s) = (𝒫(s) - 𝒫(1)) / (s - 1)
//! ```
//!
//! and `𝒢` is strictly increasing on `(1, ∞)` because `p` is, so the root is
//! unique and bisection finds it. H3 is the same construction around the
//! reference point 0.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::dynamics::{Termination, Trajectory};
use crate::energy::{lyapunov, LyapunovIndex};
use crate::field::{profile_l1_distance, AtomField, FieldError, StepProfile};
use crate::model::{Hypothesis, ModelError, NonlinearityPair};
use crate::roots::bisect;

/// Tolerance declared for the constraint residuals of analytic predictions.
pub const CONSTRAINT_TOL: f64 = 1e-10;
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-4;
/// Offset from the reference point where brackets start.
const REF_OFFSET: f64 = 1e-12;
const BRACKET_LIMIT: f64 = 1e6;
const MAX_BISECTIONS: u32 = 200;
/// Relative slack on `|A₁| ≤ |Ω|`.
const MEASURE_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OmegaError {
    #[error("no root: 𝒢 ranges over [{g_lo}, {g_hi}] on [{lo}, {hi}], target {target}")]
    NoRoot {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
        target: f64,
    },
    #[error("infeasible plateau measure |A₁| = {a1} exceeds |Ω| = {measure}")]
    InfeasibleMeasure { a1: f64, measure: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("trajectory not near-stationary: max |rate| = {max_rate:e}")]
    NotConverged { max_rate: f64 },
    #[error("cannot compare predictions for {0} and {1}")]
    HypothesisMismatch(Hypothesis, Hypothesis),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionSource {
    Analytic,
    Empirical,
}

impl fmt::Display for PredictionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionSource::Analytic => "Analytic",
            PredictionSource::Empirical => "Empirical",
        })
    }
}

/// A limit step function with its constraint residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaPrediction {
    pub hypothesis: Hypothesis,
    pub plateau_values: Vec<f64>,
    pub plateau_measures: Vec<f64>,
    /// `(μ, |A₁|)` under H1, `(ξ, |A₁|)` under H3, `(ν, |A₂|)` under H2.
    pub primary: Option<(f64, f64)>,
    pub mass_residual: f64,
    pub energy_residual: f64,
    pub source: PredictionSource,
    /// Departures from the expected shape (empirical only).
    pub deviations: Vec<String>,
}

impl OmegaPrediction {
    pub fn profile(&self) -> Result<StepProfile, FieldError> {
        let field = AtomField::new(
            self.plateau_values.clone(),
            self.plateau_measures.clone(),
            self.plateau_measures.iter().sum(),
        )?;
        Ok(field.rearrange())
    }

    /// Flat `key = value` block.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "hypothesis = {}", self.hypothesis);
        let _ = writeln!(s, "source = {}", self.source);
        if let Some((v, m)) = self.primary {
            let _ = writeln!(s, "primary.value = {v:.16e}");
            let _ = writeln!(s, "primary.measure = {m:.16e}");
        }
        let _ = writeln!(s, "plateau.count = {}", self.plateau_values.len());
        for (i, (v, m)) in self.plateau_values.iter().zip(&self.plateau_measures).enumerate() {
            let _ = writeln!(s, "plateau.{}.value = {v:.16e}", i + 1);
            let _ = writeln!(s, "plateau.{}.measure = {m:.16e}", i + 1);
        }
        let _ = writeln!(s, "mass_residual = {:.16e}", self.mass_residual);
        let _ = writeln!(s, "energy_residual = {:.16e}", self.energy_residual);
        if self.deviations.is_empty() {
            let _ = writeln!(s, "deviations = none");
        } else {
            let _ = writeln!(s, "deviations = \"{}\"", self.deviations.join("; "));
        }
        s
    }
}

/// `s ↦ (𝒫(s) - 𝒫(ref)) / (s - ref)`.
pub struct GFunction<'a> {
    reference: f64,
    p_ref: f64,
    pair: &'a NonlinearityPair,
}

impl<'a> GFunction<'a> {
    pub fn new(pair: &'a NonlinearityPair, reference: f64) -> Result<Self, ModelError> {
        Ok(Self {
            reference,
            p_ref: pair.antiderivative(reference)?,
            pair,
        })
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn eval(&self, s: f64) -> Result<f64, ModelError> {
        Ok((self.pair.antiderivative(s)? - self.p_ref) / (s - self.reference))
    }
}

/// Result of sampling `𝒢` for strict monotonicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonicityAudit {
    pub strictly_increasing: bool,
    /// Smallest increment between consecutive samples.
    pub min_increment: f64,
    /// Where that increment starts.
    pub at: f64,
}

/// Samples `𝒢` on `n` equally spaced points of `(lo, hi]` (or `[lo, hi)`
/// when `hi` is the reference point).
pub fn audit_monotonicity(g: &GFunction<'_>, lo: f64, hi: f64, n: usize) -> Result<MonotonicityAudit, ModelError> {
    let step = (hi - lo) / n as f64;
    let points: Vec<f64> = if hi <= g.reference() {
        (0..n).map(|k| lo + k as f64 * step).collect()
    } else {
        (1..=n).map(|k| lo + k as f64 * step).collect()
    };
    let mut prev = g.eval(points[0])?;
    let mut audit = MonotonicityAudit {
        strictly_increasing: prev.is_finite(),
        min_increment: f64::INFINITY,
        at: points[0],
    };
    for w in points.windows(2) {
        let next = g.eval(w[1])?;
        let inc = next - prev;
        if !(inc >= audit.min_increment) {
            audit.min_increment = inc;
            audit.at = w[0];
        }
        if !(inc > 0.0) {
            audit.strictly_increasing = false;
        }
        prev = next;
    }
    Ok(audit)
}

/// Limit `μ χ_{A₁} + χ_{Ω∖A₁}` under H1 from the mass and limit energy.
pub fn predict_h1(
    m0: f64,
    e1_inf: f64,
    omega_measure: f64,
    pair: &NonlinearityPair,
) -> Result<OmegaPrediction, OmegaError> {
    if !(omega_measure > 0.0) {
        return Err(OmegaError::Precondition(format!("|Ω| must be positive, got {omega_measure}")));
    }
    if !(m0 > omega_measure) {
        return Err(OmegaError::Precondition(format!(
            "H1 needs m0 > |Ω| (m0 = {m0}, |Ω| = {omega_measure})"
        )));
    }
    if !e1_inf.is_finite() {
        return Err(OmegaError::Precondition("energy limit is not finite".into()));
    }
    let big_g = GFunction::new(pair, 1.0)?;
    let p1 = pair.antiderivative(1.0)?;
    let target = (e1_inf - p1 * omega_measure) / (m0 - omega_measure);

    let lo = 1.0 + REF_OFFSET;
    let mut hi = 2.0_f64.max(2.0 * m0 / omega_measure);
    let g_lo = big_g.eval(lo)?;
    let mut g_hi = big_g.eval(hi)?;
    while g_hi < target && hi < BRACKET_LIMIT {
        hi = (2.0 * hi).min(BRACKET_LIMIT);
        g_hi = big_g.eval(hi)?;
    }
    let no_root = || OmegaError::NoRoot {
        lo,
        hi,
        g_lo,
        g_hi,
        target,
    };
    if !(g_lo <= target && target <= g_hi) {
        return Err(no_root());
    }
    let mu = bisect(|s| big_g.eval(s).map_or(f64::NAN, |v| v - target), lo, hi, MAX_BISECTIONS)
        .ok_or_else(no_root)?
        .root;
    let a1 = (m0 - omega_measure) / (mu - 1.0);
    if a1 > omega_measure * (1.0 + MEASURE_SLACK) {
        return Err(OmegaError::InfeasibleMeasure {
            a1,
            measure: omega_measure,
        });
    }
    let p_mu = pair.antiderivative(mu)?;
    let rest = omega_measure - a1;
    let mass_residual = mu * a1 + rest - m0;
    let energy_residual = p_mu * a1 + p1 * rest - e1_inf;
    let (values, measures) = two_plateaus(mu, 1.0, a1, omega_measure);
    Ok(OmegaPrediction {
        hypothesis: Hypothesis::H1,
        plateau_values: values,
        plateau_measures: measures,
        primary: Some((mu, a1)),
        mass_residual,
        energy_residual,
        source: PredictionSource::Analytic,
        deviations: Vec::new(),
    })
}

/// Limit `ξ χ_{A₁}` under H3.
pub fn predict_h3(
    m0: f64,
    e3_inf: f64,
    omega_measure: f64,
    pair: &NonlinearityPair,
) -> Result<OmegaPrediction, OmegaError> {
    if !(omega_measure > 0.0) {
        return Err(OmegaError::Precondition(format!("|Ω| must be positive, got {omega_measure}")));
    }
    if !(m0 < 0.0) {
        return Err(OmegaError::Precondition(format!("H3 needs m0 < 0, got {m0}")));
    }
    if !e3_inf.is_finite() {
        return Err(OmegaError::Precondition("energy limit is not finite".into()));
    }
    let big_g = GFunction::new(pair, 0.0)?;
    let target = e3_inf / m0;

    let hi = -REF_OFFSET;
    let mut lo = (-2.0_f64).min(2.0 * m0 / omega_measure);
    let g_hi = big_g.eval(hi)?;
    let mut g_lo = big_g.eval(lo)?;
    while g_lo > target && lo > -BRACKET_LIMIT {
        lo = (2.0 * lo).max(-BRACKET_LIMIT);
        g_lo = big_g.eval(lo)?;
    }
    let no_root = || OmegaError::NoRoot {
        lo,
        hi,
        g_lo,
        g_hi,
        target,
    };
    if !(g_lo <= target && target <= g_hi) {
        return Err(no_root());
    }
    let xi = bisect(|s| big_g.eval(s).map_or(f64::NAN, |v| v - target), lo, hi, MAX_BISECTIONS)
        .ok_or_else(no_root)?
        .root;
    let a1 = m0 / xi;
    if a1 > omega_measure * (1.0 + MEASURE_SLACK) {
        return Err(OmegaError::InfeasibleMeasure {
            a1,
            measure: omega_measure,
        });
    }
    let mass_residual = xi * a1 - m0;
    let energy_residual = pair.antiderivative(xi)? * a1 - e3_inf;
    let (values, measures) = two_plateaus(xi, 0.0, a1, omega_measure);
    Ok(OmegaPrediction {
        hypothesis: Hypothesis::H3,
        plateau_values: values,
        plateau_measures: measures,
        primary: Some((xi, a1)),
        mass_residual,
        energy_residual,
        source: PredictionSource::Analytic,
        deviations: Vec::new(),
    })
}

/// Main plateau plus the reference plateau; the latter is dropped when its
/// measure is below `1e-12 |Ω|`, and the main plateau then covers `Ω`.
fn two_plateaus(value: f64, reference: f64, a1: f64, measure: f64) -> (Vec<f64>, Vec<f64>) {
    let rest = measure - a1;
    if rest > 1e-12 * measure {
        (vec![value, reference], vec![a1, rest])
    } else {
        (vec![value], vec![measure])
    }
}

/// Clusters the final snapshot of a near-stationary trajectory into plateaus
/// and checks them against the expected limit shape.
pub fn extract_limit(
    tr: &Trajectory,
    pair: &NonlinearityPair,
    cluster_tol: f64,
) -> Result<OmegaPrediction, OmegaError> {
    let converged = tr.termination == Termination::Stationary || tr.final_max_rate < 100.0 * tr.stat_tol;
    if !converged || tr.is_empty() {
        return Err(OmegaError::NotConverged {
            max_rate: tr.final_max_rate,
        });
    }
    let last = tr.last();
    let clusters = cluster(last, cluster_tol);
    let tag = tr.hypothesis.tag;
    let near = |v: f64, r: f64| (v - r).abs() <= cluster_tol;
    let mut deviations = Vec::new();

    let primary = match tag {
        Hypothesis::H1 | Hypothesis::H3 => {
            let reference = if tag == Hypothesis::H1 { 1.0 } else { 0.0 };
            let main: Vec<&(f64, f64)> = clusters.iter().filter(|c| !near(c.0, reference)).collect();
            if main.len() != 1 {
                deviations.push(format!(
                    "expected one plateau away from {reference}, found {}",
                    main.len()
                ));
            }
            let first = main.first().map(|c| **c);
            if let Some((v, _)) = first {
                let ok = if tag == Hypothesis::H1 { v > 1.0 } else { v < 0.0 };
                if !ok {
                    deviations.push(format!("plateau value {v} on the wrong side of {reference}"));
                }
            }
            first
        }
        Hypothesis::H2 => {
            let mids: Vec<&(f64, f64)> = clusters
                .iter()
                .filter(|c| !near(c.0, 0.0) && !near(c.0, 1.0))
                .collect();
            if mids.len() > 1 {
                deviations.push(format!("expected at most one plateau in (0, 1), found {}", mids.len()));
            }
            mids.first().map(|c| **c)
        }
        Hypothesis::None => {
            deviations.push("no hypothesis holds for the initial data".into());
            None
        }
    };

    let values: Vec<f64> = clusters.iter().map(|c| c.0).collect();
    let measures: Vec<f64> = clusters.iter().map(|c| c.1).collect();
    let profile_field = AtomField::new(values.clone(), measures.clone(), last.domain_measure())?;
    let index = tr.energy_index;
    let mass_residual = profile_field.mass() - tr.mass_series[0];
    let energy_residual = lyapunov(&profile_field, pair, index)? - lyapunov(last, pair, index)?;

    Ok(OmegaPrediction {
        hypothesis: tag,
        plateau_values: values,
        plateau_measures: measures,
        primary,
        mass_residual,
        energy_residual,
        source: PredictionSource::Empirical,
        deviations,
    })
}

/// Single-linkage clustering of values sorted in decreasing order: a gap
/// larger than `tol` starts a new cluster. Returns `(weighted mean, measure)`.
fn cluster(u: &AtomField, tol: f64) -> Vec<(f64, f64)> {
    let mut atoms: Vec<(f64, f64)> = u.atoms().collect();
    atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<(f64, f64, f64)> = Vec::new(); // (Σ m v, Σ m, last value)
    for (v, m) in atoms {
        match out.last_mut() {
            Some(c) if c.2 - v <= tol => {
                c.0 += m * v;
                c.1 += m;
                c.2 = v;
            }
            _ => out.push((m * v, m, v)),
        }
    }
    out.into_iter().map(|(mv, m, _)| (mv / m, m)).collect()
}

/// Distances between an analytic and an empirical limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub value_residual: f64,
    pub measure_residual: f64,
    pub profile_l1: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn consistency_check(
    analytic: &OmegaPrediction,
    empirical: &OmegaPrediction,
    tolerance: f64,
) -> Result<ConsistencyReport, OmegaError> {
    if analytic.hypothesis != empirical.hypothesis {
        return Err(OmegaError::HypothesisMismatch(analytic.hypothesis, empirical.hypothesis));
    }
    if analytic.source != PredictionSource::Analytic || empirical.source != PredictionSource::Empirical {
        return Err(OmegaError::Precondition(
            "expected one analytic and one empirical prediction".into(),
        ));
    }
    let (value_residual, measure_residual) = match (analytic.primary, empirical.primary) {
        (Some((va, ma)), Some((ve, me))) => ((va - ve).abs(), (ma - me).abs()),
        _ => (f64::INFINITY, f64::INFINITY),
    };
    let profile_l1 = profile_l1_distance(&analytic.profile()?, &empirical.profile()?)?;
    let passed = value_residual <= tolerance && measure_residual <= tolerance && profile_l1 <= tolerance;
    Ok(ConsistencyReport {
        value_residual,
        measure_residual,
        profile_l1,
        tolerance,
        passed,
    })
}

/// Analytic prediction for a finished trajectory, using its mass and final
/// energy. H2 and no-hypothesis runs have no analytic predictor.
pub fn predict_for(tr: &Trajectory, pair: &NonlinearityPair, e_inf: f64) -> Result<OmegaPrediction, OmegaError> {
    let m0 = tr.mass_series[0];
    let measure = tr.initial().domain_measure();
    match tr.hypothesis.tag {
        Hypothesis::H1 => predict_h1(m0, e_inf, measure, pair),
        Hypothesis::H3 => predict_h3(m0, e_inf, measure, pair),
        other => Err(OmegaError::Precondition(format!("no analytic predictor for {other}"))),
    }
}

/// Index of the functional whose limit feeds each predictor.
pub fn predictor_index(tag: Hypothesis) -> Option<LyapunovIndex> {
    match tag {
        Hypothesis::H1 => Some(LyapunovIndex::One),
        Hypothesis::H3 => Some(LyapunovIndex::Three),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;

    fn logistic() -> NonlinearityPair {
        builtin_model("logistic-identity").unwrap()
    }

    #[test]
    fn h1_closed_form_identity() {
        // p = id ⇒ 𝒢(s) = (s + 1)/2; right side 2 ⇒ μ = 3.
        // m0 = 2, |Ω| = 1, E = 2·1 + 𝒫(1) = 2.5.
        let m = logistic();
        let pred = predict_h1(2.0, 2.5, 1.0, &m).unwrap();
        let (mu, a1) = pred.primary.unwrap();
        assert!((mu - 3.0).abs() < 1e-12);
        assert!((a1 - 0.5).abs() < 1e-12);
        assert!(pred.mass_residual.abs() <= CONSTRAINT_TOL);
        assert!(pred.energy_residual.abs() <= CONSTRAINT_TOL);
        assert_eq!(pred.plateau_values, vec![mu, 1.0]);
        // defining-equation residual
        let g = GFunction::new(&m, 1.0).unwrap();
        let lhs = g.eval(mu).unwrap() * (2.0 - 1.0) + 0.5;
        assert!((lhs - 2.5).abs() <= 1e-10);
    }

    #[test]
    fn h1_constant_limit() {
        let m = logistic();
        let e = 0.5 * 1.75 * 1.75;
        assert_eq!(e, 1.53125);
        let pred = predict_h1(1.75, e, 1.0, &m).unwrap();
        let (mu, a1) = pred.primary.unwrap();
        assert!((mu - 1.75).abs() < 1e-12);
        assert!((a1 - 1.0).abs() < 1e-12);
        assert_eq!(pred.plateau_values.len(), 1);
        assert_eq!(pred.plateau_measures, vec![1.0]);
    }

    #[test]
    fn h1_preconditions() {
        let m = logistic();
        assert!(matches!(predict_h1(1.0, 0.5, 1.0, &m), Err(OmegaError::Precondition(_))));
        assert!(matches!(predict_h1(0.5, 0.5, 1.0, &m), Err(OmegaError::Precondition(_))));
        // right side below 𝒢(1⁺) = p(1): no root
        assert!(matches!(predict_h1(2.0, 0.9, 1.0, &m), Err(OmegaError::NoRoot { .. })));
        // right side 1.1 ⇒ μ = 1.2 ⇒ a₁ = 1/0.2 = 5 > |Ω|
        assert!(matches!(
            predict_h1(2.0, 1.6, 1.0, &m),
            Err(OmegaError::InfeasibleMeasure { .. })
        ));
    }

    #[test]
    fn h3_closed_form_identity() {
        // 𝒫(s)/s = s/2; E/m0 = -1 ⇒ ξ = -2, a₁ = m0 / -2.
        let m = logistic();
        let pred = predict_h3(-1.0, 1.0, 1.0, &m).unwrap();
        let (xi, a1) = pred.primary.unwrap();
        assert!((xi + 2.0).abs() < 1e-12);
        assert!((a1 - 0.5).abs() < 1e-12);
        assert!(pred.mass_residual.abs() <= CONSTRAINT_TOL);
        assert!(pred.energy_residual.abs() <= CONSTRAINT_TOL);
        assert_eq!(pred.plateau_values, vec![xi, 0.0]);
    }

    #[test]
    fn h3_constant_limit() {
        let m = logistic();
        let pred = predict_h3(-0.5, 0.125, 1.0, &m).unwrap();
        let (xi, a1) = pred.primary.unwrap();
        assert!((xi + 0.5).abs() < 1e-12);
        assert!((a1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn h3_infeasible_and_precondition() {
        let m = logistic();
        // E/m0 = -0.1 ⇒ ξ = -0.2 ⇒ a₁ = 5
        assert!(matches!(
            predict_h3(-1.0, 0.1, 1.0, &m),
            Err(OmegaError::InfeasibleMeasure { .. })
        ));
        assert!(matches!(predict_h3(0.5, 0.1, 1.0, &m), Err(OmegaError::Precondition(_))));
    }

    #[test]
    fn g_function_monotone_for_catalogue() {
        for name in ["logistic-identity", "logistic-cubic"] {
            let m = builtin_model(name).unwrap();
            let g1 = GFunction::new(&m, 1.0).unwrap();
            assert!(audit_monotonicity(&g1, 1.0, 100.0, 10_000).unwrap().strictly_increasing);
            let g0 = GFunction::new(&m, 0.0).unwrap();
            assert!(audit_monotonicity(&g0, -100.0, 0.0, 10_000).unwrap().strictly_increasing);
        }
    }

    #[test]
    fn clustering_merges_within_gap() {
        let u = AtomField::from_atoms(&[(2.0, 0.25), (2.00005, 0.25), (1.0, 0.5)], 1.0).unwrap();
        let c = cluster(&u, 1e-4);
        assert_eq!(c.len(), 2);
        assert!((c[0].0 - 2.000025).abs() < 1e-12);
        assert_eq!(c[0].1, 0.5);
        assert_eq!(c[1], (1.0, 0.5));
    }

    #[test]
    fn consistency_identical_and_perturbed() {
        let m = logistic();
        let a = predict_h1(2.0, 2.5, 1.0, &m).unwrap();
        let mut e = a.clone();
        e.source = PredictionSource::Empirical;
        let r = consistency_check(&a, &e, 1e-3).unwrap();
        assert_eq!((r.value_residual, r.measure_residual, r.profile_l1), (0.0, 0.0, 0.0));
        assert!(r.passed);

        let (mu, a1) = e.primary.unwrap();
        e.primary = Some((mu + 0.1, a1));
        e.plateau_values[0] = mu + 0.1;
        let r = consistency_check(&a, &e, 1e-3).unwrap();
        assert!(!r.passed);
        assert!((r.value_residual - 0.1).abs() < 1e-12);

        let mut other = e.clone();
        other.hypothesis = Hypothesis::H3;
        assert!(matches!(
            consistency_check(&a, &other, 1e-3),
            Err(OmegaError::HypothesisMismatch(..))
        ));
    }

    #[test]
    fn summary_lists_plateaus() {
        let m = logistic();
        let a = predict_h1(2.0, 2.5, 1.0, &m).unwrap();
        let s = a.summary();
        assert!(s.contains("hypothesis = H1"));
        assert!(s.contains("plateau.count = 2"));
        assert!(s.contains("plateau.2.value = 1.0000000000000000e0"));
    }
}
