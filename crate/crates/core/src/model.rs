//! Model nonlinearities and the nonlocal rate.
//!
//! The rate acting on a field `u` is
//!
//! ```text
//! F(u) = g(u) p(u) - g(u) * λ(u),    λ(u) = ∫ g(u) p(u) / ∫ g(u)
//! ```
//!
//! where `g` vanishes at 0 and 1 (positive between, negative outside) and `p`
//! is strictly increasing. On an [`AtomField`] every integral is an exact
//! weighted sum, so the rate is evaluated atom by atom.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::field::AtomField;
use crate::quadrature::{adaptive_simpson, QuadratureError};

/// Shared scalar function `ℝ → ℝ`.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance used when the antiderivative is computed by quadrature.
pub const ANTIDERIVATIVE_TOL: f64 = 1e-12;
/// Maximum bisection depth of the adaptive Simpson rule.
pub const ANTIDERIVATIVE_MAX_DEPTH: u32 = 40;
/// Relative factor of the scale-aware denominator guard.
pub const DEFAULT_EPS_DEN_FACTOR: f64 = 1e-10;
/// Grid size used when sampling the hypotheses on `g` and `p`.
pub const VALIDATION_GRID: usize = 10_000;
/// Grid size of the dense maximisation behind [`lipschitz_bound`].
pub const LIPSCHITZ_GRID: usize = 100_000;

/// Names accepted by [`builtin_model`].
pub const BUILTIN_MODELS: &[&str] = &["logistic-identity", "logistic-cubic", "logistic-exp"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model `{name}`; available models: {}", BUILTIN_MODELS.join(", "))]
    UnknownModel { name: String },
    #[error("denominator ∫g(u) = {denominator:e} is below the guard threshold {threshold:e}")]
    DenominatorVanishing { denominator: f64, threshold: f64 },
    #[error("model check `{check}` failed at u = {witness} (observed {observed:e})")]
    HypothesisViolation {
        check: &'static str,
        witness: f64,
        observed: f64,
    },
    #[error("ball radius {ball_radius} too large: lower bound on |∫g| is {alpha:e}")]
    BallTooLarge { ball_radius: f64, alpha: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// How `𝒫(s) = ∫₀ˢ p` is obtained.
#[derive(Clone)]
pub enum Antiderivative {
    Closed(ScalarFn),
    Quadrature,
}

/// The pair `(g, p)` with derivatives and the antiderivative of `p`.
#[derive(Clone)]
pub struct NonlinearityPair {
    name: String,
    g: ScalarFn,
    g_prime: ScalarFn,
    p: ScalarFn,
    p_prime: ScalarFn,
    antiderivative: Antiderivative,
}

impl fmt::Debug for NonlinearityPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearityPair")
            .field("name", &self.name)
            .field("closed_form_p", &self.closed_form_p())
            .finish()
    }
}

impl NonlinearityPair {
    pub fn new(
        name: impl Into<String>,
        g: ScalarFn,
        g_prime: ScalarFn,
        p: ScalarFn,
        p_prime: ScalarFn,
        antiderivative: Antiderivative,
    ) -> Self {
        Self {
            name: name.into(),
            g,
            g_prime,
            p,
            p_prime,
            antiderivative,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn g(&self, s: f64) -> f64 {
        (self.g)(s)
    }

    #[inline]
    pub fn g_prime(&self, s: f64) -> f64 {
        (self.g_prime)(s)
    }

    #[inline]
    pub fn p(&self, s: f64) -> f64 {
        (self.p)(s)
    }

    #[inline]
    pub fn p_prime(&self, s: f64) -> f64 {
        (self.p_prime)(s)
    }

    pub fn closed_form_p(&self) -> bool {
        matches!(self.antiderivative, Antiderivative::Closed(_))
    }

    /// `𝒫(s)`; see [`antiderivative_value`].
    pub fn antiderivative(&self, s: f64) -> Result<f64, ModelError> {
        antiderivative_value(self, s)
    }

    /// Samples the structural hypotheses on `[-range, range]`.
    ///
    /// Checks `g(0) = g(1) = 0`, the sign pattern of `g`, `p' > 0`, `𝒫(0) = 0`
    /// and `𝒫' = p` by central differences. The first failure is returned
    /// with a witness point.
    pub fn validate(&self, range: f64) -> Result<(), ModelError> {
        let range = range.max(1.0 + 1e-3);
        for s in [0.0, 1.0] {
            let v = self.g(s);
            if !(v.abs() <= 1e-12) {
                return Err(violation("g vanishes at 0 and 1", s, v));
            }
        }
        let n = VALIDATION_GRID;
        for k in 1..n {
            let s = k as f64 / n as f64;
            let v = self.g(s);
            if !(v > 0.0) {
                return Err(violation("g > 0 on (0,1)", s, v));
            }
        }
        // Outside (0,1): the symmetric grid skips 0 and the closed interval [0,1].
        for k in 0..=n {
            let s = -range + 2.0 * range * k as f64 / n as f64;
            if (0.0..=1.0).contains(&s) {
                continue;
            }
            let v = self.g(s);
            if !(v < 0.0) {
                return Err(violation("g < 0 outside [0,1]", s, v));
            }
        }
        let anchors = [0.0, 1.0];
        let grid = (0..=n).map(|k| -range + 2.0 * range * k as f64 / n as f64);
        for s in anchors.into_iter().chain(grid) {
            let v = self.p_prime(s);
            if !(v > 0.0) {
                return Err(violation("p strictly increasing", s, v));
            }
        }
        let p0 = self.antiderivative(0.0)?;
        if !(p0.abs() <= 1e-12) {
            return Err(violation("antiderivative vanishes at 0", 0.0, p0));
        }
        let h = 1e-5;
        for k in 0..=100 {
            let s = -range + 2.0 * range * k as f64 / 100.0;
            let fd = (self.antiderivative(s + h)? - self.antiderivative(s - h)?) / (2.0 * h);
            let p = self.p(s);
            if !((fd - p).abs() <= 1e-8 * p.abs().max(1.0)) {
                return Err(violation("antiderivative derivative equals p", s, fd - p));
            }
        }
        Ok(())
    }
}

fn violation(check: &'static str, witness: f64, observed: f64) -> ModelError {
    ModelError::HypothesisViolation {
        check,
        witness,
        observed,
    }
}

fn arc(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

/// Catalogued models. All use the logistic `g(u) = u(1-u)`.
pub fn builtin_model(name: &str) -> Result<NonlinearityPair, ModelError> {
    let g = arc(|u| u * (1.0 - u));
    let g_prime = arc(|u| 1.0 - 2.0 * u);
    let (p, p_prime, anti): (ScalarFn, ScalarFn, ScalarFn) = match name {
        "logistic-identity" => (arc(|u| u), arc(|_| 1.0), arc(|s| 0.5 * s * s)),
        "logistic-cubic" => (
            arc(|u| u * u * u + u),
            arc(|u| 3.0 * u * u + 1.0),
            arc(|s| 0.25 * s.powi(4) + 0.5 * s * s),
        ),
        "logistic-exp" => (arc(f64::exp), arc(f64::exp), arc(f64::exp_m1)),
        _ => {
            return Err(ModelError::UnknownModel {
                name: name.to_owned(),
            })
        }
    };
    Ok(NonlinearityPair::new(
        name,
        g,
        g_prime,
        p,
        p_prime,
        Antiderivative::Closed(anti),
    ))
}

/// `𝒫(s) = ∫₀ˢ p(τ) dτ`, closed form when available, otherwise adaptive
/// Simpson with absolute tolerance [`ANTIDERIVATIVE_TOL`].
pub fn antiderivative_value(pair: &NonlinearityPair, s: f64) -> Result<f64, ModelError> {
    match &pair.antiderivative {
        Antiderivative::Closed(f) => Ok(f(s)),
        Antiderivative::Quadrature => {
            if s == 0.0 {
                return Ok(0.0);
            }
            let p = &pair.p;
            Ok(adaptive_simpson(
                |t| p(t),
                0.0,
                s,
                ANTIDERIVATIVE_TOL,
                ANTIDERIVATIVE_MAX_DEPTH,
            )?)
        }
    }
}

/// Which initial-data regime a field falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    /// `u₀ ≥ 1`, `u₀ ≢ 1`.
    H1,
    /// `0 ≤ u₀ ≤ 1`, `∫g(u₀) ≠ 0`.
    H2,
    /// `u₀ ≤ 0`, `u₀ ≢ 0`.
    H3,
    None,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H3 => "H3",
            Hypothesis::None => "None",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypothesisClass {
    pub tag: Hypothesis,
    /// Smallest atom value.
    pub essinf_a: f64,
    /// Largest atom value.
    pub esssup_b: f64,
    pub integral_g_u0: f64,
}

impl HypothesisClass {
    /// Closed interval the exact flow cannot leave, if any.
    pub fn invariant_region(&self) -> Option<(f64, f64)> {
        match self.tag {
            Hypothesis::H1 => Some((1.0, self.esssup_b)),
            Hypothesis::H2 => Some((0.0, 1.0)),
            Hypothesis::H3 => Some((self.essinf_a, 0.0)),
            Hypothesis::None => None,
        }
    }

    /// Bound on `|λ(t)|` valid along the whole orbit.
    pub fn lambda_bound(&self, pair: &NonlinearityPair) -> Option<f64> {
        self.invariant_region()
            .map(|(lo, hi)| pair.p(lo).abs().max(pair.p(hi).abs()))
    }
}

pub fn classify_hypothesis(u0: &AtomField, pair: &NonlinearityPair) -> HypothesisClass {
    let a = u0.min_value();
    let b = u0.max_value();
    let integral_g = u0.integral_of(|s| pair.g(s));
    let guard = default_eps_den(u0, pair);
    let tag = if a >= 1.0 && b > 1.0 {
        Hypothesis::H1
    } else if a >= 0.0 && b <= 1.0 && integral_g.abs() > guard {
        Hypothesis::H2
    } else if b <= 0.0 && a < 0.0 {
        Hypothesis::H3
    } else {
        Hypothesis::None
    };
    HypothesisClass {
        tag,
        essinf_a: a,
        esssup_b: b,
        integral_g_u0: integral_g,
    }
}

/// Scale-aware guard `1e-10 · |Ω| · max|g(sᵢ)|`.
pub fn default_eps_den(u: &AtomField, pair: &NonlinearityPair) -> f64 {
    guard_threshold(u.values(), u.domain_measure(), pair)
}

pub(crate) fn guard_threshold(values: &[f64], measure: f64, pair: &NonlinearityPair) -> f64 {
    let max_g = values.iter().map(|&s| pair.g(s).abs()).fold(0.0, f64::max);
    DEFAULT_EPS_DEN_FACTOR * measure * max_g
}

/// Numerator and denominator of `λ` for a value/weight pair of slices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaParts {
    pub numerator: f64,
    pub denominator: f64,
}

impl LambdaParts {
    pub fn compute(values: &[f64], weights: &[f64], pair: &NonlinearityPair) -> Self {
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for (&s, &m) in values.iter().zip(weights) {
            let gs = m * pair.g(s);
            numerator += gs * pair.p(s);
            denominator += gs;
        }
        Self {
            numerator,
            denominator,
        }
    }

    /// Ratio, or `DenominatorVanishing` when `|denominator| ≤ eps_den`.
    pub fn lambda(&self, eps_den: f64) -> Result<f64, ModelError> {
        if !(self.denominator.abs() > eps_den) || self.denominator == 0.0 {
            return Err(ModelError::DenominatorVanishing {
                denominator: self.denominator,
                threshold: eps_den,
            });
        }
        Ok(self.numerator / self.denominator)
    }
}

pub fn lambda_of(u: &AtomField, pair: &NonlinearityPair, eps_den: f64) -> Result<f64, ModelError> {
    LambdaParts::compute(u.values(), u.weights(), pair).lambda(eps_den)
}

/// Writes `rᵢ = g(sᵢ)(p(sᵢ) - λ)` into `out` and returns `λ`.
///
/// `eps_den = None` selects the scale-aware guard of the current values.
pub fn rates_into(
    values: &[f64],
    weights: &[f64],
    measure: f64,
    pair: &NonlinearityPair,
    eps_den: Option<f64>,
    out: &mut [f64],
) -> Result<f64, ModelError> {
    let eps = eps_den.unwrap_or_else(|| guard_threshold(values, measure, pair));
    let lambda = LambdaParts::compute(values, weights, pair).lambda(eps)?;
    for (r, &s) in out.iter_mut().zip(values) {
        *r = pair.g(s) * (pair.p(s) - lambda);
    }
    Ok(lambda)
}

/// Per-atom rates of the nonlocal equation.
pub fn rhs(u: &AtomField, pair: &NonlinearityPair, eps_den: f64) -> Result<Vec<f64>, ModelError> {
    let mut out = vec![0.0; u.len()];
    rates_into(
        u.values(),
        u.weights(),
        u.domain_measure(),
        pair,
        Some(eps_den),
        &mut out,
    )?;
    Ok(out)
}

/// Constants of the local Lipschitz estimate for `F` on an `L∞` ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzEstimate {
    /// `sup |f|, |g|, |f'|, |g'|` on `[-c̄, c̄]`, `f = g p`.
    pub k: f64,
    /// Lower bound of `|∫g(v)|` over the ball.
    pub alpha: f64,
    pub l: f64,
    pub ball_radius: f64,
}

/// Lipschitz constant `L = K + 3K³|Ω|²/α²` of `F` on the ball of radius
/// `ball_radius` around `u`.
pub fn lipschitz_bound(
    u: &AtomField,
    pair: &NonlinearityPair,
    ball_radius: f64,
) -> Result<LipschitzEstimate, ModelError> {
    let c_bar = u.sup_norm() + ball_radius;
    let n = LIPSCHITZ_GRID;
    let mut k = 0.0_f64;
    for i in 0..=n {
        let s = -c_bar + 2.0 * c_bar * i as f64 / n as f64;
        let (g, gp, p, pp) = (pair.g(s), pair.g_prime(s), pair.p(s), pair.p_prime(s));
        let f = g * p;
        let fp = gp * p + g * pp;
        k = k.max(f.abs()).max(g.abs()).max(fp.abs()).max(gp.abs());
    }
    let measure = u.domain_measure();
    let alpha = u.integral_of(|s| pair.g(s)).abs() - k * ball_radius * measure;
    if !(alpha > 0.0) {
        return Err(ModelError::BallTooLarge { ball_radius, alpha });
    }
    let l = k + 3.0 * k.powi(3) * measure * measure / (alpha * alpha);
    Ok(LipschitzEstimate {
        k,
        alpha,
        l,
        ball_radius,
    })
}
