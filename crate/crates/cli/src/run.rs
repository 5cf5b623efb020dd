//! One simulation: integrate, audit, estimate limits, write the output set.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nonlocal_core::energy::{energy_limit, EnergyError, EnergyLimit};
use nonlocal_core::io::write_staircase;
use nonlocal_core::omega::predict_for;
use nonlocal_core::dynamics::fmt17;
use nonlocal_core::{
    extract_limit, integrate, verify_trajectory, AuditReport, DynamicsError, Hypothesis, NonlinearityPair,
    OmegaError, OmegaPrediction, Trajectory,
};

use crate::config::RunConfig;
use crate::error::CliError;

pub struct RunOutput {
    pub pair: NonlinearityPair,
    pub trajectory: Trajectory,
    pub audit: AuditReport,
    pub energy_limit: Result<EnergyLimit, EnergyError>,
    /// Plateaus read off the final snapshot.
    pub empirical: Result<OmegaPrediction, OmegaError>,
    /// Closed-system prediction from mass and limit energy (H1 and H3 only).
    pub analytic: Option<Result<OmegaPrediction, OmegaError>>,
}

impl RunOutput {
    /// `(μ or ξ, |A₁|)`, preferring the analytic prediction.
    pub fn primary(&self) -> Option<(f64, f64)> {
        match &self.analytic {
            Some(Ok(p)) => p.primary,
            _ => self.empirical.as_ref().ok().and_then(|p| p.primary),
        }
    }

    pub fn mass_drift(&self) -> f64 {
        let series = &self.trajectory.mass_series;
        let m0 = series[0];
        let scale = if m0 != 0.0 { m0.abs() } else { 1.0 };
        series.iter().map(|m| (m - m0).abs() / scale).fold(0.0, f64::max)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `text` to `path`.
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Integrates and analyses without touching the file system.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, DynamicsOrConfig> {
    let u0 = cfg.initial_field().map_err(DynamicsOrConfig::Config)?;
    let pair = cfg.build_pair().map_err(DynamicsOrConfig::Config)?;
    let trajectory = integrate(&u0, &pair, &cfg.integrator).map_err(DynamicsOrConfig::Dynamics)?;
    let audit = verify_trajectory(&trajectory, &pair, &trajectory.hypothesis);
    let energy_limit = energy_limit(&trajectory);
    let empirical = extract_limit(&trajectory, &pair, cfg.cluster_tol);
    let analytic = match (trajectory.hypothesis.tag, &energy_limit) {
        (Hypothesis::H1 | Hypothesis::H3, Ok(e)) => Some(predict_for(&trajectory, &pair, e.value)),
        _ => None,
    };
    Ok(RunOutput {
        pair,
        trajectory,
        audit,
        energy_limit,
        empirical,
        analytic,
    })
}

pub enum DynamicsOrConfig {
    Config(crate::config::ConfigError),
    Dynamics(DynamicsError),
}

/// Runs one configuration and writes its output set. A numerical failure
/// leaves `<base>.failure.txt` with the last good state.
pub fn simulate(cfg: &RunConfig) -> Result<(RunOutput, Vec<PathBuf>), CliError> {
    ensure_dir(&cfg.output_dir)?;
    let out = match execute(cfg) {
        Ok(out) => out,
        Err(DynamicsOrConfig::Config(e)) => return Err(e.into()),
        Err(DynamicsOrConfig::Dynamics(DynamicsError::Config(msg))) => {
            return Err(crate::config::ConfigError::Invalid(msg).into())
        }
        Err(DynamicsOrConfig::Dynamics(e)) => {
            let path = cfg.output_path("failure.txt");
            write_text(&path, &failure_report(&e))?;
            return Err(CliError::Numerical {
                message: e.to_string(),
                diagnostic: Some(path),
            });
        }
    };
    let paths = write_outputs(cfg, &out)?;
    Ok((out, paths))
}

fn failure_report(e: &DynamicsError) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "error = \"{e}\"");
    if let DynamicsError::NumericalFailure { t, last_good, .. } = e {
        let _ = writeln!(s, "time = {}", fmt17(*t));
        let _ = writeln!(s, "last_good.count = {}", last_good.len());
        for (i, (v, m)) in last_good.atoms().enumerate() {
            let _ = writeln!(s, "last_good.{}.value = {}", i + 1, fmt17(v));
            let _ = writeln!(s, "last_good.{}.measure = {}", i + 1, fmt17(m));
        }
    }
    s
}

pub fn write_outputs(cfg: &RunConfig, out: &RunOutput) -> Result<Vec<PathBuf>, CliError> {
    let csv = cfg.output_path("trajectory.csv");
    let mut w = create(&csv)?;
    out.trajectory.write_csv(&mut w).map_err(|e| CliError::io(&csv, e))?;
    finish(&csv, w)?;

    let profile = cfg.output_path("profile.dat");
    let mut w = create(&profile)?;
    write_staircase(&out.trajectory.last().rearrange(), &mut w).map_err(|e| CliError::io(&profile, e))?;
    finish(&profile, w)?;

    let summary = cfg.output_path("summary.txt");
    write_text(&summary, &summary_text(cfg, out))?;
    Ok(vec![csv, summary, profile])
}

fn prefixed(prefix: &str, block: &str) -> String {
    block.lines().map(|l| format!("{prefix}.{l}\n")).collect()
}

pub fn summary_text(cfg: &RunConfig, out: &RunOutput) -> String {
    let tr = &out.trajectory;
    let mut s = String::new();
    let _ = writeln!(s, "model = {}", out.pair.name());
    let _ = writeln!(s, "domain_measure = {}", fmt17(cfg.domain_measure));
    let _ = writeln!(s, "atoms = {}", tr.initial().len());
    let _ = writeln!(s, "hypothesis = {}", tr.hypothesis.tag);
    let _ = writeln!(s, "termination = {}", tr.termination);
    let _ = writeln!(s, "final_time = {}", fmt17(tr.final_time()));
    let _ = writeln!(s, "records = {}", tr.len());
    let _ = writeln!(s, "final_max_rate = {}", fmt17(tr.final_max_rate));
    let _ = writeln!(s, "final_denominator = {}", fmt17(tr.final_denominator));
    let _ = writeln!(s, "mass.initial = {}", fmt17(tr.mass_series[0]));
    let _ = writeln!(s, "mass.drift = {}", fmt17(out.mass_drift()));
    let _ = writeln!(s, "energy.index = {}", tr.energy_index.number());
    let _ = writeln!(s, "energy.final = {}", fmt17(*tr.energy_series.last().unwrap_or(&f64::NAN)));
    match &out.energy_limit {
        Ok(e) => {
            let _ = writeln!(s, "energy.limit = {}", fmt17(e.value));
            let _ = writeln!(s, "energy.limit_error = {}", fmt17(e.error_bar));
        }
        Err(e) => {
            let _ = writeln!(s, "energy.limit = unavailable");
            let _ = writeln!(s, "energy.limit_reason = \"{e}\"");
        }
    }
    for c in &out.audit.checks {
        let status = match (c.applicable, c.passed) {
            (false, _) => "n/a",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        let key = c.name.replace(' ', "_");
        let _ = writeln!(s, "audit.{key} = {status}");
        let _ = writeln!(s, "audit.{key}.worst = {}", fmt17(c.worst));
        let _ = writeln!(s, "audit.{key}.tolerance = {}", fmt17(c.tolerance));
    }
    let _ = writeln!(s, "audit.all = {}", if out.audit.all_passed() { "PASS" } else { "FAIL" });
    match &out.empirical {
        Ok(p) => s.push_str(&prefixed("limit.empirical", &p.summary())),
        Err(e) => {
            let _ = writeln!(s, "limit.empirical = unavailable");
            let _ = writeln!(s, "limit.empirical.reason = \"{e}\"");
        }
    }
    match &out.analytic {
        Some(Ok(p)) => s.push_str(&prefixed("limit.analytic", &p.summary())),
        Some(Err(e)) => {
            let _ = writeln!(s, "limit.analytic = unavailable");
            let _ = writeln!(s, "limit.analytic.reason = \"{e}\"");
        }
        None => {
            let _ = writeln!(s, "limit.analytic = unavailable");
        }
    }
    s
}
