use std::fmt;

use crate::field::{l1_distance, profile_l1_distance};
use crate::model::{Hypothesis, HypothesisClass, NonlinearityPair};

use super::{Termination, Trajectory};

pub const MASS_TOL: f64 = 1e-6;
pub const REGION_TOL: f64 = 1e-9;
pub const LAMBDA_TOL: f64 = 1e-9;
pub const ENERGY_TOL: f64 = 1e-9;
pub const ISOMETRY_TOL: f64 = 1e-12;
/// Inversions up to this many ulps of `sup |u|` are rounding, not reordering.
pub const ORDER_ULPS: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AuditCheck {
    pub name: &'static str,
    /// False when the check has no meaning for this run (e.g. no hypothesis).
    pub applicable: bool,
    pub passed: bool,
    /// Largest violation seen, `0` when none.
    pub worst: f64,
    pub tolerance: f64,
}

impl AuditCheck {
    fn measured(name: &'static str, worst: f64, tolerance: f64) -> Self {
        Self {
            name,
            applicable: true,
            passed: worst <= tolerance,
            worst: worst.max(0.0),
            tolerance,
        }
    }

    fn not_applicable(name: &'static str) -> Self {
        Self {
            name,
            applicable: false,
            passed: true,
            worst: 0.0,
            tolerance: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match (c.applicable, c.passed) {
                (false, _) => "n/a ",
                (true, true) => "PASS",
                (true, false) => "FAIL",
            };
            writeln!(
                f,
                "{status}  {:<26} worst={:.3e} tol={:.1e}",
                c.name, c.worst, c.tolerance
            )?;
        }
        Ok(())
    }
}

/// Audits a finished trajectory against the structural properties of the
/// exact flow.
pub fn verify_trajectory(tr: &Trajectory, pair: &NonlinearityPair, hyp: &HypothesisClass) -> AuditReport {
    let mut checks = Vec::new();
    if tr.is_empty() {
        return AuditReport { checks };
    }

    let m0 = tr.mass_series[0];
    let mass_scale = if m0 != 0.0 { m0.abs() } else { 1.0 };
    let mass_drift = tr
        .snapshots
        .iter()
        .map(|s| (s.mass() - m0).abs() / mass_scale)
        .fold(0.0, f64::max);
    checks.push(AuditCheck::measured("mass conservation", mass_drift, MASS_TOL));

    // Adjacent pairs of the initial order by value; equal initial values stay
    // equal and are skipped.
    let init = tr.initial().values();
    let mut order: Vec<usize> = (0..init.len()).collect();
    order.sort_by(|&a, &b| init[b].total_cmp(&init[a]));
    let pairs: Vec<(usize, usize)> = order
        .windows(2)
        .filter(|w| init[w[0]] > init[w[1]])
        .map(|w| (w[0], w[1]))
        .collect();
    // Atoms that converge to one plateau approach each other exponentially
    // and eventually coincide in floating point. Ties and inversions below the
    // representable resolution of the values are not violations.
    let sup = tr.snapshots.iter().map(|s| s.sup_norm()).fold(0.0, f64::max);
    let order_tol = ORDER_ULPS * f64::EPSILON * sup;
    let mut order_worst = f64::NEG_INFINITY;
    for snap in &tr.snapshots {
        let v = snap.values();
        for &(hi, lo) in &pairs {
            order_worst = order_worst.max(v[lo] - v[hi]);
        }
    }
    checks.push(AuditCheck {
        name: "order preservation",
        applicable: !pairs.is_empty(),
        passed: pairs.is_empty() || order_worst <= order_tol,
        worst: order_worst.max(0.0),
        tolerance: order_tol,
    });

    let skip_last = tr.termination == Termination::DenominatorVanishing;
    let checked = if skip_last { tr.len() - 1 } else { tr.len() };

    match hyp.invariant_region() {
        Some((lo, hi)) => {
            let worst = tr
                .snapshots
                .iter()
                .flat_map(|s| s.values().iter())
                .map(|&v| (lo - v).max(v - hi))
                .fold(f64::NEG_INFINITY, f64::max);
            checks.push(AuditCheck::measured("invariant region", worst, REGION_TOL));
        }
        None => checks.push(AuditCheck::not_applicable("invariant region")),
    }

    match hyp.lambda_bound(pair) {
        Some(bound) => {
            let worst = tr.lambda_series[..checked]
                .iter()
                .map(|l| l.abs() - bound)
                .fold(f64::NEG_INFINITY, f64::max);
            checks.push(AuditCheck::measured("lambda bound", worst, LAMBDA_TOL));
        }
        None => checks.push(AuditCheck::not_applicable("lambda bound")),
    }

    if hyp.tag == Hypothesis::None {
        checks.push(AuditCheck::not_applicable("energy monotonicity"));
    } else {
        let worst = tr
            .energy_series
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        checks.push(AuditCheck::measured("energy monotonicity", worst, ENERGY_TOL));
    }

    let scale = tr.initial().domain_measure() * tr.initial().sup_norm().max(1.0);
    let mut iso_worst = 0.0_f64;
    for w in tr.snapshots.windows(2) {
        let direct = l1_distance(&w[0], &w[1]).unwrap_or(f64::INFINITY);
        let rearranged = profile_l1_distance(&w[0].rearrange(), &w[1].rearrange()).unwrap_or(f64::INFINITY);
        iso_worst = iso_worst.max((direct - rearranged).abs());
    }
    if iso_worst.is_nan() {
        iso_worst = f64::INFINITY;
    }
    checks.push(AuditCheck::measured(
        "rearrangement isometry",
        iso_worst,
        ISOMETRY_TOL * scale,
    ));

    AuditReport { checks }
}
