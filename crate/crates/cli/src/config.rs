//! Run configuration: flat `section.key = value` text.
//!
//! ```text
//! # comment
//! model.builtin      = logistic-identity        # or model.g / model.p
//! model.g            = "u*(1-u)"
//! model.p            = "u^3 + u"
//! model.range        = 4                        # optional sampling half-width
//! domain.measure     = 1
//! initial.atoms      = "2.0:0.5, 1.5:0.5"       # value:measure pairs
//! initial.expr       = "1 + x"                  # or an expression in x ...
//! initial.samples    = 1000                     # ... sampled at cell midpoints
//! integrator.rtol    = 1e-8                     # and atol, dt_init, dt_max,
//!                                               # t_max, eps_den (number or
//!                                               # auto), stat_tol,
//!                                               # record_every, lipschitz_cap
//! omega.cluster_tol  = 1e-4
//! output.dir         = out
//! output.base        = run
//! run.seed           = 1
//! ```
//!
//! Strings may be quoted with `"`; a `#` outside quotes starts a comment.
//! Unknown keys, repeated keys and ill-typed values are errors.

use std::path::PathBuf;

use nonlocal_core::omega::DEFAULT_CLUSTER_TOL;
use nonlocal_core::{build_model, builtin_model, parse_in, AtomField, IntegratorConfig, NonlinearityPair};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `section.key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Builtin(String),
    Expressions { g: String, p: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    Atoms(Vec<(f64, f64)>),
    Expression { text: String, samples: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub model_range: Option<f64>,
    pub domain_measure: f64,
    pub initial: Option<InitialSpec>,
    pub integrator: IntegratorConfig,
    pub cluster_tol: f64,
    pub output_dir: PathBuf,
    pub output_base: String,
    pub seed: u64,
}

/// Keys that take a single number and can therefore be swept.
pub const NUMERIC_KEYS: &[&str] = &[
    "model.range",
    "domain.measure",
    "integrator.rtol",
    "integrator.atol",
    "integrator.dt_init",
    "integrator.dt_max",
    "integrator.t_max",
    "integrator.eps_den",
    "integrator.stat_tol",
    "integrator.record_every",
    "omega.cluster_tol",
];

const KEYS: &[&str] = &[
    "model.builtin",
    "model.g",
    "model.p",
    "model.range",
    "domain.measure",
    "initial.atoms",
    "initial.expr",
    "initial.samples",
    "integrator.rtol",
    "integrator.atol",
    "integrator.dt_init",
    "integrator.dt_max",
    "integrator.t_max",
    "integrator.eps_den",
    "integrator.stat_tol",
    "integrator.record_every",
    "integrator.lipschitz_cap",
    "omega.cluster_tol",
    "output.dir",
    "output.base",
    "run.seed",
];

/// Raw entries in file order, before typing.
#[derive(Clone, Debug, Default)]
struct Entries {
    builtin: Option<String>,
    g: Option<String>,
    p: Option<String>,
    atoms: Option<String>,
    expr: Option<String>,
    samples: Option<usize>,
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value.parse().map_err(|_| bad(key, format!("`{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(bad(key, "must be finite"));
    }
    Ok(v)
}

/// Strips a trailing comment and surrounding quotes.
fn clean_value(raw: &str) -> Result<String, ()> {
    let mut in_quotes = false;
    let mut end = raw.len();
    for (i, c) in raw.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => {
                end = i;
                break;
            }
            _ => {}
        }
    }
    if in_quotes {
        return Err(());
    }
    let v = raw[..end].trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        Ok(v[1..v.len() - 1].to_owned())
    } else if v.contains('"') {
        Err(())
    } else {
        Ok(v.to_owned())
    }
}

/// `"v:w, v:w, ..."`
pub fn parse_atoms(key: &str, text: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    let mut atoms = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (v, w) = item
            .split_once(':')
            .ok_or_else(|| bad(key, format!("`{item}` is not `value:measure`")))?;
        atoms.push((number(key, v.trim())?, number(key, w.trim())?));
    }
    if atoms.is_empty() {
        return Err(bad(key, "no atoms given"));
    }
    Ok(atoms)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Builtin("logistic-identity".into()),
            model_range: None,
            domain_measure: 1.0,
            initial: None,
            integrator: IntegratorConfig::default(),
            cluster_tol: DEFAULT_CLUSTER_TOL,
            output_dir: PathBuf::from("."),
            output_base: "run".into(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut entries = Entries::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            let value = clean_value(value).map_err(|_| ConfigError::Syntax { line })?;
            let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: key.to_owned(),
            })?;
            if seen.contains(known) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_owned(),
                });
            }
            seen.push(known);
            match key {
                "model.builtin" => entries.builtin = Some(value),
                "model.g" => entries.g = Some(value),
                "model.p" => entries.p = Some(value),
                "initial.atoms" => entries.atoms = Some(value),
                "initial.expr" => entries.expr = Some(value),
                "initial.samples" => {
                    entries.samples = Some(value.parse().map_err(|_| bad(key, "expected a positive integer"))?)
                }
                _ => cfg.set(key, &value)?,
            }
        }

        cfg.model = match (entries.builtin, entries.g, entries.p) {
            (Some(name), None, None) => ModelSpec::Builtin(name),
            (None, Some(g), Some(p)) => ModelSpec::Expressions { g, p },
            (None, None, None) => ModelSpec::Builtin("logistic-identity".into()),
            (Some(_), _, _) => {
                return Err(ConfigError::Invalid(
                    "give either model.builtin or model.g and model.p, not both".into(),
                ))
            }
            _ => return Err(ConfigError::Invalid("model.g and model.p must be given together".into())),
        };
        cfg.initial = match (entries.atoms, entries.expr, entries.samples) {
            (Some(a), None, None) => Some(InitialSpec::Atoms(parse_atoms("initial.atoms", &a)?)),
            (None, Some(text), Some(samples)) if samples > 0 => Some(InitialSpec::Expression { text, samples }),
            (None, Some(_), _) => {
                return Err(ConfigError::Invalid(
                    "initial.expr needs initial.samples (a positive integer)".into(),
                ))
            }
            (None, None, None) => None,
            (None, None, Some(_)) => return Err(ConfigError::Invalid("initial.samples without initial.expr".into())),
            (Some(_), _, _) => {
                return Err(ConfigError::Invalid(
                    "give either initial.atoms or initial.expr, not both".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one scalar key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let integ = &mut self.integrator;
        match key {
            "model.range" => self.model_range = Some(number(key, value)?),
            "domain.measure" => self.domain_measure = number(key, value)?,
            "integrator.rtol" => integ.rtol = number(key, value)?,
            "integrator.atol" => integ.atol = number(key, value)?,
            "integrator.dt_init" => integ.dt_init = number(key, value)?,
            "integrator.dt_max" => integ.dt_max = number(key, value)?,
            "integrator.t_max" => integ.t_max = number(key, value)?,
            "integrator.eps_den" => {
                integ.eps_den = if value == "auto" { None } else { Some(number(key, value)?) }
            }
            "integrator.stat_tol" => integ.stat_tol = number(key, value)?,
            "integrator.record_every" => integ.record_every = number(key, value)?,
            "integrator.lipschitz_cap" => {
                integ.lipschitz_cap = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad(key, "expected true or false")),
                }
            }
            "omega.cluster_tol" => self.cluster_tol = number(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            "output.base" => {
                if value.is_empty() || value.contains('/') {
                    return Err(bad(key, "must be a non-empty file name"));
                }
                self.output_base = value.to_owned()
            }
            "run.seed" => self.seed = value.parse().map_err(|_| bad(key, "expected an unsigned integer"))?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_owned(),
                })
            }
        }
        Ok(())
    }

    /// Sets a numeric key, including `initial.atoms.<i>` (1-based atom value).
    pub fn set_numeric(&mut self, key: &str, x: f64) -> Result<(), ConfigError> {
        if let Some(index) = key.strip_prefix("initial.atoms.") {
            let i: usize = index
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| bad(key, "atom index must be a positive integer"))?;
            match &mut self.initial {
                Some(InitialSpec::Atoms(atoms)) if i <= atoms.len() => atoms[i - 1].0 = x,
                _ => return Err(bad(key, "no such atom in initial.atoms")),
            }
        } else if NUMERIC_KEYS.contains(&key) {
            self.set(key, &format!("{x:.17e}"))?;
        } else {
            return Err(bad(key, "not a numeric key"));
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.domain_measure > 0.0) {
            return Err(bad("domain.measure", "must be positive"));
        }
        if let Some(r) = self.model_range {
            if !(r > 1.0) {
                return Err(bad("model.range", "must exceed 1"));
            }
        }
        if !(self.cluster_tol > 0.0) {
            return Err(bad("omega.cluster_tol", "must be positive"));
        }
        self.integrator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// The initial field; an error when the config has none.
    pub fn initial_field(&self) -> Result<AtomField, ConfigError> {
        let measure = self.domain_measure;
        match &self.initial {
            None => Err(ConfigError::Invalid(
                "this command needs initial.atoms or initial.expr".into(),
            )),
            Some(InitialSpec::Atoms(atoms)) => {
                AtomField::from_atoms(atoms, measure).map_err(|e| bad("initial.atoms", e.to_string()))
            }
            Some(InitialSpec::Expression { text, samples }) => {
                let e = parse_in(text, "x").map_err(|e| bad("initial.expr", e.to_string()))?;
                let h = measure / *samples as f64;
                let values = (0..*samples)
                    .map(|k| e.eval((k as f64 + 0.5) * h))
                    .collect::<Result<Vec<f64>, _>>()
                    .map_err(|e| bad("initial.expr", e.to_string()))?;
                AtomField::from_samples(&values, measure).map_err(|e| bad("initial.expr", e.to_string()))
            }
        }
    }

    /// Sampling half-width for model validation: `max(2, ‖u₀‖∞ + 1)` unless
    /// set explicitly.
    pub fn working_range(&self) -> f64 {
        self.model_range.unwrap_or_else(|| {
            let sup = self.initial_field().map(|u| u.sup_norm()).unwrap_or(0.0);
            (sup + 1.0).max(2.0)
        })
    }

    pub fn build_pair(&self) -> Result<NonlinearityPair, ConfigError> {
        match &self.model {
            ModelSpec::Builtin(name) => builtin_model(name).map_err(|e| bad("model.builtin", e.to_string())),
            ModelSpec::Expressions { g, p } => {
                let s = self.working_range();
                build_model(g, p, (-s, s)).map_err(|e| bad("model", e.to_string()))
            }
        }
    }

    pub fn output_path(&self, suffix: &str) -> PathBuf {
        self.output_dir.join(format!("{}.{suffix}", self.output_base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config() {
        let cfg = RunConfig::parse(
            r#"
            # H1 example
            model.builtin = logistic-identity
            domain.measure = 1
            initial.atoms = "1.5:0.5, 2.0:0.5"   # two cells
            integrator.t_max = 200
            integrator.eps_den = auto
            integrator.lipschitz_cap = false
            omega.cluster_tol = 1e-4
            output.base = "h1"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.initial, Some(InitialSpec::Atoms(vec![(1.5, 0.5), (2.0, 0.5)])));
        assert_eq!(cfg.integrator.t_max, 200.0);
        assert_eq!(cfg.output_base, "h1");
        assert_eq!(cfg.initial_field().unwrap().mass(), 1.75);
        assert_eq!(cfg.working_range(), 3.0);
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        match RunConfig::parse("modle.g = \"u\"") {
            Err(ConfigError::UnknownKey { line: 1, key }) => assert_eq!(key, "modle.g"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            RunConfig::parse("domain.measure = 1\ndomain.measure = 2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(RunConfig::parse("domain.measure 1"), Err(ConfigError::Syntax { line: 1 })));
    }

    #[test]
    fn ill_typed_values() {
        assert!(matches!(RunConfig::parse("integrator.rtol = small"), Err(ConfigError::Value { .. })));
        assert!(matches!(
            RunConfig::parse("integrator.lipschitz_cap = yes"),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(RunConfig::parse("initial.atoms = \"1.5\""), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("initial.atoms = \"\""), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("integrator.rtol = -1"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::parse("model.g = \"u*(1-u)\""), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn expression_initial_data() {
        let cfg = RunConfig::parse("initial.expr = \"1 + x\"\ninitial.samples = 1000").unwrap();
        let u = cfg.initial_field().unwrap();
        assert_eq!(u.len(), 1000);
        assert!((u.mass() - 1.5).abs() < 1e-3);
    }

    #[test]
    fn expression_model() {
        let cfg = RunConfig::parse("model.g = \"u*(1-u)\"\nmodel.p = \"u^3 + u\"").unwrap();
        let pair = cfg.build_pair().unwrap();
        assert_eq!(pair.p(2.0), 10.0);
        let cfg = RunConfig::parse("model.g = \"u*(1-u)\"\nmodel.p = \"-u\"").unwrap();
        assert!(cfg.build_pair().is_err());
    }

    #[test]
    fn numeric_overrides() {
        let mut cfg = RunConfig::parse("initial.atoms = 1.5:0.5, 2.0:0.5").unwrap();
        cfg.set_numeric("initial.atoms.2", 1.8).unwrap();
        assert_eq!(cfg.initial, Some(InitialSpec::Atoms(vec![(1.5, 0.5), (1.8, 0.5)])));
        cfg.set_numeric("integrator.t_max", 5.0).unwrap();
        assert_eq!(cfg.integrator.t_max, 5.0);
        assert!(cfg.set_numeric("initial.atoms.3", 1.0).is_err());
        assert!(cfg.set_numeric("output.base", 1.0).is_err());
        assert!(cfg.set_numeric("integrator.lipschitz_cap", 1.0).is_err());
    }
}
