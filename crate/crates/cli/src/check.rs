//! Full invariant audit of one run.

use std::fmt;

use nonlocal_core::energy::integrate_samples;
use nonlocal_core::{
    consistency_check, integrate, profile_l1_distance, verify_trajectory, AtomField, Termination, Trajectory,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::{self, RunOutput};

/// Relative tolerance for the dissipation identity. The integral is taken by
/// Simpson's rule over the recorded samples, so it reflects `record_every`.
pub const DISSIPATION_TOL: f64 = 1e-4;
/// Profile distance allowed between runs that differ only in atom order,
/// relative to `(1 + ‖u₀‖∞)|Ω|`.
pub const COMMUTATION_TOL: f64 = 1e-8;
/// Tolerance for analytic against empirical limits.
pub const CONSISTENCY_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "n/a",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CheckRow {
    pub name: String,
    pub status: Status,
    pub worst: f64,
    pub tolerance: f64,
    pub note: String,
}

impl CheckRow {
    fn measured(name: &str, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            status: if worst <= tolerance { Status::Pass } else { Status::Fail },
            worst,
            tolerance,
            note: String::new(),
        }
    }

    fn skipped(name: &str, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::NotApplicable,
            worst: 0.0,
            tolerance: 0.0,
            note: note.into(),
        }
    }

    fn failed(name: &str, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Fail,
            worst: f64::INFINITY,
            tolerance: 0.0,
            note: note.into(),
        }
    }
}

pub fn table(rows: &[CheckRow]) -> String {
    let mut s = format!("{:<28} {:<6} {:>13} {:>10}  note\n", "check", "status", "worst", "tolerance");
    for r in rows {
        let line = format!(
            "{:<28} {:<6} {:>13.6e} {:>10.1e}  {}",
            r.name, r.status, r.worst, r.tolerance, r.note
        );
        s.push_str(line.trim_end());
        s.push('\n');
    }
    s
}

/// Breaks order and mass in the middle snapshot, for exercising the audit.
fn inject_fault(tr: &mut Trajectory) {
    let k = tr.len() / 2;
    let snap = &tr.snapshots[k];
    let mut values: Vec<f64> = snap.values().iter().map(|v| v + 1e-3).collect();
    values.reverse();
    if let Ok(bad) = snap.with_values(values) {
        tr.snapshots[k] = bad;
    }
}

fn dissipation_row(tr: &Trajectory, record_every: f64) -> CheckRow {
    const NAME: &str = "dissipation identity";
    if tr.termination == Termination::DenominatorVanishing {
        return CheckRow::skipped(NAME, "dissipation is singular at the guard");
    }
    if tr.len() < 3 {
        return CheckRow::skipped(NAME, "fewer than three records");
    }
    let drop = tr.energy_series[tr.len() - 1] - tr.energy_series[0];
    if drop == 0.0 {
        return CheckRow::skipped(NAME, "energy is constant");
    }
    let integral = integrate_samples(&tr.times, &tr.dissipation_series);
    let mut row = CheckRow::measured(NAME, (drop - integral).abs() / drop.abs(), DISSIPATION_TOL);
    if row.status == Status::Fail {
        row.note = format!("Simpson over records {record_every} apart; a smaller record_every resolves it");
    }
    row
}

/// Integrates `u0` with the run's settings and compares the final
/// rearrangement with the reference run.
fn commutation_row(name: &str, cfg: &RunConfig, out: &RunOutput, u0: &AtomField) -> CheckRow {
    let tr = &out.trajectory;
    let other = match integrate(u0, &out.pair, &cfg.integrator) {
        Ok(t) => t,
        Err(e) => return CheckRow::failed(name, e.to_string()),
    };
    let scale = (1.0 + tr.initial().sup_norm()) * tr.initial().domain_measure();
    match profile_l1_distance(&tr.last().rearrange(), &other.last().rearrange()) {
        Ok(d) => {
            let mut row = CheckRow::measured(name, d / scale, COMMUTATION_TOL);
            if other.termination != tr.termination {
                row.status = Status::Fail;
                row.note = format!("terminations differ: {} vs {}", tr.termination, other.termination);
            }
            row
        }
        Err(e) => CheckRow::failed(name, e.to_string()),
    }
}

fn consistency_row(out: &RunOutput) -> CheckRow {
    const NAME: &str = "predictor consistency";
    let analytic = match &out.analytic {
        None => return CheckRow::skipped(NAME, "no analytic predictor or no energy limit"),
        Some(Err(e)) => return CheckRow::failed(NAME, e.to_string()),
        Some(Ok(p)) => p,
    };
    let empirical = match &out.empirical {
        Ok(p) => p,
        Err(e) => return CheckRow::skipped(NAME, e.to_string()),
    };
    match consistency_check(analytic, empirical, CONSISTENCY_TOL) {
        Ok(r) => CheckRow::measured(
            NAME,
            r.value_residual.max(r.measure_residual).max(r.profile_l1),
            CONSISTENCY_TOL,
        ),
        Err(e) => CheckRow::failed(NAME, e.to_string()),
    }
}

pub fn run_checks(cfg: &RunConfig, fault: bool) -> Result<Vec<CheckRow>, CliError> {
    let (mut out, _) = run::simulate(cfg)?;
    if fault {
        inject_fault(&mut out.trajectory);
        out.audit = verify_trajectory(&out.trajectory, &out.pair, &out.trajectory.hypothesis);
    }
    let mut rows: Vec<CheckRow> = out
        .audit
        .checks
        .iter()
        .map(|c| CheckRow {
            name: c.name.to_string(),
            status: match (c.applicable, c.passed) {
                (false, _) => Status::NotApplicable,
                (true, true) => Status::Pass,
                (true, false) => Status::Fail,
            },
            worst: c.worst,
            tolerance: c.tolerance,
            note: String::new(),
        })
        .collect();
    rows.push(dissipation_row(&out.trajectory, cfg.integrator.record_every));

    let u0 = out.trajectory.initial().clone();
    match u0.rearrange().to_field() {
        Ok(sorted) => rows.push(commutation_row("rearrangement commutation", cfg, &out, &sorted)),
        Err(e) => rows.push(CheckRow::failed("rearrangement commutation", e.to_string())),
    }
    let mut atoms: Vec<(f64, f64)> = u0.atoms().collect();
    atoms.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    match AtomField::from_atoms(&atoms, u0.domain_measure()) {
        Ok(permuted) => rows.push(commutation_row("permutation invariance", cfg, &out, &permuted)),
        Err(e) => rows.push(CheckRow::failed("permutation invariance", e.to_string())),
    }
    rows.push(consistency_row(&out));
    Ok(rows)
}
