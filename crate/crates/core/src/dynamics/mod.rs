//! Time integration of `du/dt = F(u)` on the atom representation.
//!
//! Each atom follows the characteristic `Ẏ = g(Y)(p(Y) - λ(t))`, with `λ`
//! recomputed from the full state at every Runge–Kutta stage. Step size is
//! controlled by step doubling. Near the obstruction `∫g(u) → 0` the system is
//! integrated in the rescaled time `dσ = dt / |∫g(u)|`, where it is smooth, so
//! that the crossing can be located to within the guard threshold.

mod audit;
mod characteristic;
mod trajectory;

pub use audit::{verify_trajectory, AuditCheck, AuditReport};
pub use characteristic::characteristic_flow;
pub use trajectory::{fmt17, Trajectory};

use std::fmt;

use thiserror::Error;

use crate::energy::{dissipation_given_lambda, lyapunov_slices, LyapunovIndex};
use crate::field::{AtomField, FieldError};
use crate::model::{
    classify_hypothesis, guard_threshold, lipschitz_bound, LambdaParts, ModelError, NonlinearityPair,
};

/// Invariant-region violation beyond which integration aborts.
pub const REGION_ABORT_TOL: f64 = 1e-6;
/// Smaller relative tolerances are below roundoff: step doubling then sees
/// identical half and full steps and the step size never settles.
pub const MIN_RTOL: f64 = 100.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    pub t_max: f64,
    /// Absolute denominator guard; `None` selects `1e-10 · |Ω| · max|g(u)|`
    /// re-evaluated on every state.
    pub eps_den: Option<f64>,
    /// Stop once `max |rate| < stat_tol` on two consecutive accepted steps.
    pub stat_tol: f64,
    pub record_every: f64,
    /// Cap `dt ≤ 0.1 / L` with the local Lipschitz estimate at `u₀`.
    pub lipschitz_cap: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            dt_init: 1e-3,
            dt_max: 0.1,
            t_max: 100.0,
            eps_den: None,
            stat_tol: 1e-10,
            record_every: 0.1,
            lipschitz_cap: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("dt_init", self.dt_init),
            ("dt_max", self.dt_max),
            ("t_max", self.t_max),
            ("stat_tol", self.stat_tol),
            ("record_every", self.record_every),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DynamicsError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.rtol < MIN_RTOL {
            return Err(DynamicsError::Config(format!(
                "rtol {:e} is below attainable precision {MIN_RTOL:e}",
                self.rtol
            )));
        }
        if let Some(e) = self.eps_den {
            if !(e > 0.0 && e.is_finite()) {
                return Err(DynamicsError::Config(format!("eps_den must be positive, got {e}")));
            }
        }
        if self.dt_init > self.dt_max {
            return Err(DynamicsError::Config(format!(
                "dt_init {} exceeds dt_max {}",
                self.dt_init, self.dt_max
            )));
        }
        Ok(())
    }
}

/// Why an integration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Termination {
    ReachedTmax,
    Stationary,
    /// `|∫g(u)|` fell below the guard: the solution cannot be continued.
    DenominatorVanishing,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::ReachedTmax => "ReachedTmax",
            Termination::Stationary => "Stationary",
            Termination::DenominatorVanishing => "DenominatorVanishing",
        })
    }
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("denominator vanishing: {0}")]
    DenominatorVanishing(ModelError),
    #[error("numerical failure at t = {t}: {reason}")]
    NumericalFailure {
        t: f64,
        reason: String,
        /// Last state that passed every check.
        last_good: Box<AtomField>,
    },
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl From<ModelError> for DynamicsError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::DenominatorVanishing { .. } => DynamicsError::DenominatorVanishing(e),
            other => DynamicsError::Model(other),
        }
    }
}

/// Rate evaluation on raw slices, with an optional side condition on the
/// sign of the denominator.
struct RateEval<'a> {
    weights: &'a [f64],
    measure: f64,
    pair: &'a NonlinearityPair,
    eps_den: Option<f64>,
}

impl RateEval<'_> {
    fn threshold(&self, values: &[f64]) -> f64 {
        self.eps_den
            .unwrap_or_else(|| guard_threshold(values, self.measure, self.pair))
    }

    /// Fills `out` and returns `(λ, denominator)`. `side` (±1) rejects states
    /// on the other side of the obstruction.
    fn eval(&self, values: &[f64], side: Option<f64>, out: &mut [f64]) -> Result<(f64, f64), ModelError> {
        let parts = LambdaParts::compute(values, self.weights, self.pair);
        let threshold = self.threshold(values);
        if let Some(side) = side {
            if !(side * parts.denominator > threshold) {
                return Err(ModelError::DenominatorVanishing {
                    denominator: parts.denominator,
                    threshold,
                });
            }
        }
        let lambda = parts.lambda(threshold)?;
        for (r, &s) in out.iter_mut().zip(values) {
            *r = self.pair.g(s) * (self.pair.p(s) - lambda);
        }
        Ok((lambda, parts.denominator))
    }
}

/// Scratch buffers for one classic RK4 step.
struct Rk4Work {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
        }
    }

    /// `y → y + dt Σ bᵢ kᵢ`. `k1` must already hold the rate at `y` when
    /// `k1_ready` is set.
    fn step(
        &mut self,
        rates: &RateEval<'_>,
        y: &[f64],
        dt: f64,
        side: Option<f64>,
        k1_ready: bool,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        let [k1, k2, k3, k4] = &mut self.k;
        if !k1_ready {
            rates.eval(y, side, k1)?;
        }
        for ((s, &yi), &ki) in self.stage.iter_mut().zip(y).zip(k1.iter()) {
            *s = yi + 0.5 * dt * ki;
        }
        rates.eval(&self.stage, side, k2)?;
        for ((s, &yi), &ki) in self.stage.iter_mut().zip(y).zip(k2.iter()) {
            *s = yi + 0.5 * dt * ki;
        }
        rates.eval(&self.stage, side, k3)?;
        for ((s, &yi), &ki) in self.stage.iter_mut().zip(y).zip(k3.iter()) {
            *s = yi + dt * ki;
        }
        rates.eval(&self.stage, side, k4)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

/// One classic fourth-order Runge–Kutta step of size `dt`.
///
/// `eps_den = None` uses the scale-aware guard on each stage state.
pub fn step_rk4(
    u: &AtomField,
    dt: f64,
    pair: &NonlinearityPair,
    eps_den: Option<f64>,
) -> Result<AtomField, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::Config(format!("dt must be positive, got {dt}")));
    }
    let rates = RateEval {
        weights: u.weights(),
        measure: u.domain_measure(),
        pair,
        eps_den,
    };
    let mut work = Rk4Work::new(u.len());
    let mut out = vec![0.0; u.len()];
    work.step(&rates, u.values(), dt, None, false, &mut out)?;
    Ok(u.with_values(out)?)
}

/// Collects snapshots and derived series.
struct Recorder<'a> {
    tr: Trajectory,
    pair: &'a NonlinearityPair,
    template: AtomField,
}

impl<'a> Recorder<'a> {
    fn push(&mut self, t: f64, values: &[f64], lambda: f64) -> Result<(), DynamicsError> {
        let field = self.template.with_values(values.to_vec())?;
        let w = field.weights();
        self.tr.times.push(t);
        self.tr.lambda_series.push(lambda);
        self.tr.mass_series.push(field.mass());
        self.tr
            .energy_series
            .push(lyapunov_slices(values, w, self.pair, self.tr.energy_index)?);
        self.tr.dissipation_series.push(dissipation_given_lambda(
            values,
            w,
            self.pair,
            self.tr.energy_index,
            lambda,
        ));
        self.tr.snapshots.push(field);
        Ok(())
    }

    fn last_time(&self) -> f64 {
        *self.tr.times.last().unwrap_or(&f64::NAN)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Integrates from `u0` until `t_max`, stationarity, or the denominator guard.
pub fn integrate(u0: &AtomField, pair: &NonlinearityPair, cfg: &IntegratorConfig) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    let hypothesis = classify_hypothesis(u0, pair);
    let energy_index = LyapunovIndex::for_hypothesis(hypothesis.tag);
    let region = hypothesis.invariant_region();
    let n = u0.len();
    let rates = RateEval {
        weights: u0.weights(),
        measure: u0.domain_measure(),
        pair,
        eps_den: cfg.eps_den,
    };
    let mut rec = Recorder {
        tr: Trajectory::empty(hypothesis, energy_index, cfg.stat_tol),
        pair,
        template: u0.clone(),
    };

    let mut y = u0.values().to_vec();
    let mut t = 0.0_f64;
    let mut work_full = Rk4Work::new(n);
    let mut work_half = Rk4Work::new(n);
    let mut k1 = vec![0.0; n];
    let mut full = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut half = vec![0.0; n];

    let (mut lambda, mut denominator) = match rates.eval(&y, None, &mut k1) {
        Ok(v) => v,
        Err(ModelError::DenominatorVanishing { denominator, .. }) => {
            let parts = LambdaParts::compute(&y, u0.weights(), pair);
            rec.push(t, &y, parts.numerator / denominator)?;
            rec.tr.final_denominator = denominator;
            rec.tr.final_max_rate = f64::NAN;
            rec.tr.termination = Termination::DenominatorVanishing;
            return Ok(rec.tr);
        }
        Err(e) => return Err(e.into()),
    };
    rec.push(t, &y, lambda)?;
    let mut max_rate = max_abs(&k1);
    rec.tr.final_max_rate = max_rate;
    rec.tr.final_denominator = denominator;
    if max_rate < cfg.stat_tol {
        rec.tr.termination = Termination::Stationary;
        return Ok(rec.tr);
    }

    let dt_cap = if cfg.lipschitz_cap {
        lipschitz_dt_cap(u0, pair).unwrap_or(cfg.dt_max)
    } else {
        cfg.dt_max
    };
    let mut dt = cfg.dt_init.min(dt_cap);
    let mut record_idx: u64 = 1;
    let mut quiet = 0u32;
    let termination;

    loop {
        if t >= cfg.t_max {
            termination = Termination::ReachedTmax;
            break;
        }
        let next_record = (record_idx as f64 * cfg.record_every).min(cfg.t_max);
        let clipped = dt >= next_record - t;
        let h = if clipped { next_record - t } else { dt };
        let side = denominator.signum();

        // Both the full step and the first half step start from `k1`, the
        // rate at the last accepted state.
        work_full.k[0].copy_from_slice(&k1);
        work_half.k[0].copy_from_slice(&k1);
        let trial = work_full
            .step(&rates, &y, h, Some(side), true, &mut full)
            .and_then(|_| work_half.step(&rates, &y, 0.5 * h, Some(side), true, &mut mid))
            .and_then(|_| work_half.step(&rates, &mid, 0.5 * h, Some(side), false, &mut half))
            .and_then(|_| {
                // The accepted state must stay on the same side as well.
                let parts = LambdaParts::compute(&half, u0.weights(), pair);
                if side * parts.denominator > 0.0 {
                    Ok(())
                } else {
                    Err(ModelError::DenominatorVanishing {
                        denominator: parts.denominator,
                        threshold: 0.0,
                    })
                }
            });

        let floor = 64.0 * f64::EPSILON * t.abs().max(1.0);
        match trial {
            Ok(()) => {
                let mut err = 0.0_f64;
                for i in 0..n {
                    let scale = cfg.rtol * y[i].abs().max(half[i].abs()) + cfg.atol;
                    err = err.max((half[i] - full[i]).abs() / scale);
                }
                if !err.is_finite() || half.iter().any(|v| !v.is_finite()) {
                    if h > floor {
                        dt = 0.5 * h;
                        continue;
                    }
                    return Err(failure(t, "non-finite state", &rec.template, &y));
                }
                if err > 1.0 {
                    dt = 0.5 * h;
                    if dt < floor {
                        return Err(failure(t, "step size underflow", &rec.template, &y));
                    }
                    continue;
                }
                // accept
                t = if clipped { next_record } else { t + h };
                std::mem::swap(&mut y, &mut half);
                if err < 0.05 && !clipped {
                    dt = (1.5 * dt).min(dt_cap);
                }
                if let Some((lo, hi)) = region {
                    let below = lo - y.iter().copied().fold(f64::INFINITY, f64::min);
                    let above = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - hi;
                    if below.max(above) > REGION_ABORT_TOL {
                        return Err(failure(t, "left the invariant region", &rec.template, &y));
                    }
                }
                match rates.eval(&y, None, &mut k1) {
                    Ok((l, d)) => {
                        lambda = l;
                        denominator = d;
                    }
                    Err(ModelError::DenominatorVanishing { denominator: d, .. }) => {
                        let parts = LambdaParts::compute(&y, u0.weights(), pair);
                        rec.push(t, &y, parts.numerator / d)?;
                        rec.tr.final_denominator = d;
                        rec.tr.final_max_rate = f64::NAN;
                        termination = Termination::DenominatorVanishing;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
                max_rate = max_abs(&k1);
                rec.tr.final_max_rate = max_rate;
                rec.tr.final_denominator = denominator;
                if clipped && next_record <= t {
                    rec.push(t, &y, lambda)?;
                    record_idx += 1;
                }
                if max_rate < cfg.stat_tol {
                    quiet += 1;
                } else {
                    quiet = 0;
                }
                if quiet >= 2 {
                    termination = Termination::Stationary;
                    break;
                }
            }
            Err(ModelError::DenominatorVanishing { .. }) => {
                dt = 0.5 * h;
                if dt < floor.max(1e-12 * t.abs().max(1e-3)) {
                    match approach_obstruction(&rates, &mut y, &mut t, denominator, cfg.t_max)? {
                        ObstructionOutcome::Reached { lambda: l, denominator: d } => {
                            rec.push(t, &y, l)?;
                            rec.tr.final_denominator = d;
                            rec.tr.final_max_rate = f64::NAN;
                            termination = Termination::DenominatorVanishing;
                            break;
                        }
                        ObstructionOutcome::Escaped => {
                            let (l, d) = rates.eval(&y, None, &mut k1)?;
                            lambda = l;
                            denominator = d;
                            dt = cfg.dt_init.min(dt_cap);
                            while (record_idx as f64 * cfg.record_every) <= t {
                                record_idx += 1;
                            }
                            rec.push(t, &y, lambda)?;
                        }
                    }
                }
            }
            Err(e) => return Err(e.into()),
        }
    }

    if rec.last_time() < t {
        rec.push(t, &y, lambda)?;
    }
    rec.tr.termination = termination;
    Ok(rec.tr)
}

fn failure(t: f64, reason: &str, template: &AtomField, y: &[f64]) -> DynamicsError {
    let last_good = template.with_values(y.to_vec()).unwrap_or_else(|_| template.clone());
    DynamicsError::NumericalFailure {
        t,
        reason: reason.to_owned(),
        last_good: Box::new(last_good),
    }
}

fn lipschitz_dt_cap(u0: &AtomField, pair: &NonlinearityPair) -> Option<f64> {
    let mut radius = 0.1 * u0.sup_norm().max(1.0);
    for _ in 0..40 {
        if let Ok(est) = lipschitz_bound(u0, pair, radius) {
            return Some(0.1 / est.l);
        }
        radius *= 0.5;
    }
    None
}

enum ObstructionOutcome {
    Reached { lambda: f64, denominator: f64 },
    Escaped,
}

/// Integrates `dY/dσ = |D| F(Y)`, `dt/dσ = |D|` with `D = Σ m g(Y)`.
///
/// In `σ` the vector field `g(p|D| - N sgn D)` stays bounded while
/// `D → 0`, so `D` reaches the guard after finitely many steps; the last step
/// is bisected until `0 < sgn(D₀)·D ≤ threshold`.
fn approach_obstruction(
    rates: &RateEval<'_>,
    y: &mut [f64],
    t: &mut f64,
    d_start: f64,
    t_max: f64,
) -> Result<ObstructionOutcome, DynamicsError> {
    let side = d_start.signum();
    let n = y.len();
    let pair = rates.pair;
    let weights = rates.weights;

    // Augmented state: values followed by time.
    let field = |state: &[f64], out: &mut [f64]| -> f64 {
        let parts = LambdaParts::compute(&state[..n], weights, pair);
        let d = parts.denominator;
        for i in 0..n {
            let s = state[i];
            out[i] = pair.g(s) * (pair.p(s) * d * side - parts.numerator * side);
        }
        out[n] = side * d;
        d
    };
    let rk4 = |state: &[f64], h: f64, out: &mut [f64]| {
        let m = state.len();
        let mut k1 = vec![0.0; m];
        let mut k2 = vec![0.0; m];
        let mut k3 = vec![0.0; m];
        let mut k4 = vec![0.0; m];
        let mut tmp = vec![0.0; m];
        field(state, &mut k1);
        for i in 0..m {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        field(&tmp, &mut k2);
        for i in 0..m {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        field(&tmp, &mut k3);
        for i in 0..m {
            tmp[i] = state[i] + h * k3[i];
        }
        field(&tmp, &mut k4);
        for i in 0..m {
            out[i] = state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    };
    let denom = |state: &[f64]| LambdaParts::compute(&state[..n], weights, pair).denominator;

    let mut state: Vec<f64> = y.iter().copied().chain(std::iter::once(*t)).collect();
    let mut trial = vec![0.0; n + 1];
    let mut velocity = vec![0.0; n + 1];
    let d0 = d_start.abs();

    for _ in 0..1_000_000 {
        let d = field(&state, &mut velocity);
        let speed = max_abs(&velocity[..n]).max(1e-300);
        let scale = max_abs(&state[..n]).max(1.0);
        let h = 1e-3 * scale / speed;
        rk4(&state, h, &mut trial);
        let d_trial = denom(&trial);
        let thr_trial = rates.threshold(&trial[..n]);
        if trial.iter().any(|v| !v.is_finite()) {
            return Err(failure(state[n], "non-finite state near the obstruction", &field_from(y, weights, rates.measure)?, &state[..n]));
        }
        if side * d_trial > thr_trial {
            state.copy_from_slice(&trial);
            if side * d > 2.0 * d0 || state[n] >= t_max {
                y.copy_from_slice(&state[..n]);
                *t = state[n];
                return Ok(ObstructionOutcome::Escaped);
            }
            continue;
        }
        // The guard lies inside this step: bisect its length.
        let (mut lo, mut hi) = (0.0, h);
        let mut found = None;
        for _ in 0..200 {
            let midh = 0.5 * (lo + hi);
            rk4(&state, midh, &mut trial);
            let dm = denom(&trial);
            let thr = rates.threshold(&trial[..n]);
            if side * dm > thr {
                lo = midh;
            } else if side * dm > 0.0 {
                found = Some(trial.clone());
                break;
            } else {
                hi = midh;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        let last = match found {
            Some(s) => s,
            None => {
                rk4(&state, lo, &mut trial);
                trial.clone()
            }
        };
        let parts = LambdaParts::compute(&last[..n], weights, pair);
        y.copy_from_slice(&last[..n]);
        *t = last[n];
        return Ok(ObstructionOutcome::Reached {
            lambda: parts.numerator / parts.denominator,
            denominator: parts.denominator,
        });
    }
    Err(failure(*t, "obstruction not reached", &field_from(y, weights, rates.measure)?, y))
}

fn field_from(y: &[f64], weights: &[f64], measure: f64) -> Result<AtomField, DynamicsError> {
    Ok(AtomField::new(y.to_vec(), weights.to_vec(), measure)?)
}
