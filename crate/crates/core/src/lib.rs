//! Mass-conserving nonlocal reaction dynamics
//!
//! ```text
//! u_t = g(u) p(u) - g(u) λ(t),    λ = ∫_Ω g(u) p(u) / ∫_Ω g(u)
//! ```
//!
//! on a bounded domain `Ω`. The equation has no spatial coupling, so a field
//! is stored as weighted value atoms and only its distribution is evolved.
//!
//! * [`model`]: the nonlinearity pair `(g, p)`, the hypothesis classes and
//!   the nonlocal multiplier `λ`.
//! * [`field`]: atom fields, decreasing rearrangement, `L¹` distances.
//! * [`dynamics`]: adaptive integration, the denominator guard and the
//!   invariant audit.
//! * [`energy`]: Lyapunov functionals and their limits.
//! * [`omega`]: predicted and observed limit step functions.
//! * [`expr`]: user-supplied `g` and `p` as text.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod energy;
pub mod expr;
pub mod field;
pub mod io;
pub mod model;
pub mod omega;
pub mod quadrature;
pub mod roots;

pub use dynamics::{
    characteristic_flow, integrate, step_rk4, verify_trajectory, AuditCheck, AuditReport, DynamicsError,
    IntegratorConfig, Termination, Trajectory,
};
pub use energy::{
    dissipation_constant, dissipation_rate, energy_limit, lyapunov, EnergyError, EnergyLimit, EnergyRecord,
    LyapunovIndex,
};
pub use expr::{build_model, differentiate, evaluate, parse, parse_in, simplify, BuildError, Expr, ExprError};
pub use field::{l1_distance, profile_l1_distance, AtomField, FieldError, StepProfile};
pub use model::{
    builtin_model, classify_hypothesis, lambda_of, lipschitz_bound, rhs, Hypothesis, HypothesisClass,
    ModelError, NonlinearityPair, BUILTIN_MODELS,
};
pub use omega::{
    consistency_check, extract_limit, predict_h1, predict_h3, ConsistencyReport, GFunction, OmegaError,
    OmegaPrediction, PredictionSource,
};
