//! Fields as weighted value atoms, and their decreasing rearrangement.
//!
//! Only the distribution of values over `Ω` is kept: a field is a list of
//! `(value, measure)` pairs whose measures add up to `|Ω|`. Under the flow
//! every point keeps following the characteristic of its initial value, so
//! integrals, `L¹` distances between time slices, rearrangements and energies
//! are all functionals of this list. Spatial geometry is never needed.

use std::cmp::Ordering;

use thiserror::Error;

/// Relative tolerance on `Σ weights = |Ω|`.
pub const MEASURE_TOL: f64 = 1e-12;
/// Relative drift up to which ingestion rescales the weights.
pub const RENORMALIZE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("field has no atoms")]
    Empty,
    #[error("domain measure must be positive and finite, got {0}")]
    BadMeasure(f64),
    #[error("atom {index} has non-positive or non-finite weight {weight}")]
    BadWeight { index: usize, weight: f64 },
    #[error("atom {index} has non-finite value {value}")]
    NonFiniteValue { index: usize, value: f64 },
    #[error("weights sum to {sum}, domain measure is {measure}")]
    MeasureMismatch { sum: f64, measure: f64 },
    #[error("fields are not co-evolved: weight structures differ")]
    Pairing,
    #[error("profiles live on different domains ({0} vs {1})")]
    DomainMismatch(f64, f64),
    #[error("length mismatch: {values} values for {weights} weights")]
    Length { values: usize, weights: usize },
    #[error("invalid step profile: {0}")]
    Profile(&'static str),
}

/// A field on `Ω` as weighted value atoms.
///
/// Atoms keep the order they were created in; integration relies on this to
/// key every atom to its initial value. [`AtomField::normalized`] produces
/// the canonical form (values strictly decreasing, equal values merged).
#[derive(Clone, Debug, PartialEq)]
pub struct AtomField {
    values: Vec<f64>,
    weights: Vec<f64>,
    domain_measure: f64,
}

impl AtomField {
    /// Builds a field in the given atom order.
    ///
    /// Weights within [`RENORMALIZE_TOL`] of the domain measure are rescaled
    /// onto it; a larger mismatch is rejected.
    pub fn new(values: Vec<f64>, weights: Vec<f64>, domain_measure: f64) -> Result<Self, FieldError> {
        if !(domain_measure > 0.0 && domain_measure.is_finite()) {
            return Err(FieldError::BadMeasure(domain_measure));
        }
        if values.len() != weights.len() {
            return Err(FieldError::Length {
                values: values.len(),
                weights: weights.len(),
            });
        }
        if values.is_empty() {
            return Err(FieldError::Empty);
        }
        for (index, (&value, &weight)) in values.iter().zip(&weights).enumerate() {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(FieldError::BadWeight { index, weight });
            }
            if !value.is_finite() {
                return Err(FieldError::NonFiniteValue { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        let rel = (sum - domain_measure).abs() / domain_measure;
        let weights = if rel <= MEASURE_TOL {
            weights
        } else if rel <= RENORMALIZE_TOL {
            let scale = domain_measure / sum;
            weights.into_iter().map(|w| w * scale).collect()
        } else {
            return Err(FieldError::MeasureMismatch {
                sum,
                measure: domain_measure,
            });
        };
        Ok(Self {
            values,
            weights,
            domain_measure,
        })
    }

    /// Builds a field from `(value, weight)` pairs, keeping their order.
    pub fn from_atoms(atoms: &[(f64, f64)], domain_measure: f64) -> Result<Self, FieldError> {
        let (values, weights) = atoms.iter().copied().unzip();
        Self::new(values, weights, domain_measure)
    }

    /// Equal-weight atoms from grid samples, in canonical form.
    pub fn from_samples(samples: &[f64], domain_measure: f64) -> Result<Self, FieldError> {
        if samples.is_empty() {
            return Err(FieldError::Empty);
        }
        let w = domain_measure / samples.len() as f64;
        Ok(Self::new(samples.to_vec(), vec![w; samples.len()], domain_measure)?.normalized())
    }

    /// Constant field.
    pub fn constant(value: f64, domain_measure: f64) -> Result<Self, FieldError> {
        Self::new(vec![value], vec![domain_measure], domain_measure)
    }

    /// Same weights, new values. Used for co-evolved states.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != self.weights.len() {
            return Err(FieldError::Length {
                values: values.len(),
                weights: self.weights.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FieldError::NonFiniteValue { index, value });
        }
        Ok(Self {
            values,
            weights: self.weights.clone(),
            domain_measure: self.domain_measure,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain_measure(&self) -> f64 {
        self.domain_measure
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Canonical form: values strictly decreasing, equal values merged.
    pub fn normalized(&self) -> Self {
        let (values, weights) = sorted_merged(&self.values, &self.weights);
        Self {
            values,
            weights,
            domain_measure: self.domain_measure,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.values.windows(2).all(|w| w[0] > w[1])
    }

    /// `∫_Ω u`.
    pub fn mass(&self) -> f64 {
        self.integral_of(|s| s)
    }

    /// `∫_Ω h(u)`, exact for step functions.
    pub fn integral_of<H: Fn(f64) -> f64>(&self, h: H) -> f64 {
        self.atoms().map(|(s, m)| m * h(s)).sum()
    }

    /// Distribution function `μ(s) = |{u > s}|`.
    pub fn distribution(&self, s: f64) -> f64 {
        // An empty float `sum` is -0.0; fold from +0.0 so output reads `0`.
        self.atoms().filter(|&(v, _)| v > s).fold(0.0, |acc, (_, m)| acc + m)
    }

    /// Decreasing rearrangement on `(0, |Ω|)`.
    pub fn rearrange(&self) -> StepProfile {
        let (values, weights) = sorted_merged(&self.values, &self.weights);
        let mut breakpoints = Vec::with_capacity(values.len() + 1);
        breakpoints.push(0.0);
        let mut acc = 0.0;
        for w in &weights[..weights.len() - 1] {
            acc += w;
            breakpoints.push(acc);
        }
        breakpoints.push(self.domain_measure);
        StepProfile {
            breakpoints,
            values,
        }
    }
}

fn sorted_merged(values: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap_or(Ordering::Equal));
    let mut out_v: Vec<f64> = Vec::with_capacity(values.len());
    let mut out_w: Vec<f64> = Vec::with_capacity(values.len());
    for i in order {
        match out_v.last() {
            Some(&last) if last == values[i] => *out_w.last_mut().unwrap() += weights[i],
            _ => {
                out_v.push(values[i]);
                out_w.push(weights[i]);
            }
        }
    }
    (out_v, out_w)
}

/// `Σ mᵢ |sᵢ - tᵢ|` for co-evolved fields (same weights, same atom order).
pub fn l1_distance(u: &AtomField, v: &AtomField) -> Result<f64, FieldError> {
    if u.weights != v.weights || u.domain_measure != v.domain_measure {
        return Err(FieldError::Pairing);
    }
    Ok(u
        .values
        .iter()
        .zip(&v.values)
        .zip(&u.weights)
        .map(|((a, b), m)| m * (a - b).abs())
        .sum())
}

/// A nonincreasing step function on `(0, |Ω|)`.
///
/// Plateau `i` covers `[breakpoints[i], breakpoints[i + 1])`; the value at a
/// breakpoint is the one to its right.
#[derive(Clone, Debug, PartialEq)]
pub struct StepProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.is_empty() {
            return Err(FieldError::Empty);
        }
        if breakpoints.len() != values.len() + 1 {
            return Err(FieldError::Profile("need one more breakpoint than plateaus"));
        }
        if breakpoints[0] != 0.0 {
            return Err(FieldError::Profile("first breakpoint must be 0"));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(FieldError::Profile("breakpoints must increase strictly"));
        }
        if !values.windows(2).all(|w| w[0] > w[1]) {
            return Err(FieldError::Profile("plateau values must decrease strictly"));
        }
        if values.iter().chain(&breakpoints).any(|v| !v.is_finite()) {
            return Err(FieldError::Profile("non-finite entry"));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Plateaus given by value and length, largest value first.
    pub fn from_plateaus(plateaus: &[(f64, f64)]) -> Result<Self, FieldError> {
        let mut breakpoints = vec![0.0];
        let mut acc = 0.0;
        for &(_, len) in plateaus {
            acc += len;
            breakpoints.push(acc);
        }
        Self::new(breakpoints, plateaus.iter().map(|p| p.0).collect())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn plateau_values(&self) -> &[f64] {
        &self.values
    }

    pub fn plateau_lengths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn domain_measure(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Right-continuous evaluation; `y` is clamped into `[0, |Ω|)`.
    pub fn value_at(&self, y: f64) -> f64 {
        let idx = self.breakpoints[1..].partition_point(|&b| b <= y);
        self.values[idx.min(self.values.len() - 1)]
    }

    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.plateau_lengths())
            .map(|(v, l)| v * l)
            .sum()
    }

    /// `|{w♯ > s}|`.
    pub fn distribution(&self, s: f64) -> f64 {
        // values are strictly decreasing, so the superlevel set is an
        // initial segment ending at a breakpoint
        self.breakpoints[self.values.partition_point(|&v| v > s)]
    }

    /// Back to a canonical atom field.
    pub fn to_field(&self) -> Result<AtomField, FieldError> {
        AtomField::new(self.values.clone(), self.plateau_lengths(), self.domain_measure())
    }

    /// Staircase points `(y, value)`: each plateau contributes its left and
    /// right end, so every interior breakpoint appears twice.
    pub fn staircase(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(2 * self.values.len());
        for (i, &v) in self.values.iter().enumerate() {
            pts.push((self.breakpoints[i], v));
            pts.push((self.breakpoints[i + 1], v));
        }
        pts
    }
}

/// Exact `L¹(0, |Ω|)` distance on the common refinement of both partitions.
pub fn profile_l1_distance(a: &StepProfile, b: &StepProfile) -> Result<f64, FieldError> {
    let (ma, mb) = (a.domain_measure(), b.domain_measure());
    if (ma - mb).abs() > MEASURE_TOL * ma.max(mb) {
        return Err(FieldError::DomainMismatch(ma, mb));
    }
    let (mut i, mut j) = (0, 0);
    let mut left = 0.0;
    let mut total = 0.0;
    while i < a.values.len() && j < b.values.len() {
        let ra = a.breakpoints[i + 1];
        let rb = b.breakpoints[j + 1];
        let right = ra.min(rb);
        total += (right - left) * (a.values[i] - b.values[j]).abs();
        left = right;
        if ra <= right {
            i += 1;
        }
        if rb <= right {
            j += 1;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(atoms: &[(f64, f64)]) -> AtomField {
        AtomField::from_atoms(atoms, atoms.iter().map(|a| a.1).sum()).unwrap()
    }

    #[test]
    fn from_samples_examples() {
        let u = AtomField::from_samples(&[1.5, 2.0], 1.0).unwrap();
        assert_eq!(u.values(), &[2.0, 1.5]);
        assert_eq!(u.weights(), &[0.5, 0.5]);
        let c = AtomField::from_samples(&[1.0; 4], 2.0).unwrap();
        assert_eq!(c.values(), &[1.0]);
        assert_eq!(c.weights(), &[2.0]);
        assert_eq!(AtomField::from_samples(&[], 1.0), Err(FieldError::Empty));
    }

    #[test]
    fn from_samples_midpoint_mass() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 + 0.5) / n as f64).collect();
        let u = AtomField::from_samples(&xs, 1.0).unwrap();
        assert_eq!(u.len(), 1000);
        assert!((u.mass() - 1.5).abs() < 1e-3);
    }

    #[test]
    fn weight_tolerance() {
        // within 1e-9: rescaled
        let u = AtomField::from_atoms(&[(1.0, 0.5), (2.0, 0.5 + 4e-10)], 1.0).unwrap();
        assert!((u.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // beyond: rejected
        assert!(matches!(
            AtomField::from_atoms(&[(1.0, 0.5), (2.0, 0.6)], 1.0),
            Err(FieldError::MeasureMismatch { .. })
        ));
        assert!(matches!(
            AtomField::from_atoms(&[(1.0, 0.0), (2.0, 1.0)], 1.0),
            Err(FieldError::BadWeight { index: 0, .. })
        ));
    }

    #[test]
    fn mass_and_integrals() {
        let u = f(&[(2.0, 0.5), (1.5, 0.5)]);
        assert_eq!(u.mass(), 1.75);
        assert_eq!(AtomField::constant(3.0, 2.0).unwrap().mass(), 6.0);
        let g = |s: f64| s * (1.0 - s);
        assert_eq!(f(&[(0.0, 0.5), (1.0, 0.5)]).integral_of(g), 0.0);
        assert_eq!(u.integral_of(|s| s), u.mass());
        assert_eq!(AtomField::constant(2.0, 1.0).unwrap().integral_of(|s| 0.5 * s * s), 2.0);
        assert_eq!(u.rearrange().integral(), u.mass());
    }

    #[test]
    fn distribution_examples() {
        let u = f(&[(3.0, 0.2), (2.0, 0.3), (1.0, 0.5)]);
        assert_eq!(u.distribution(1.5), 0.5);
        assert_eq!(u.distribution(0.0), 1.0);
        assert_eq!(u.distribution(3.5), 0.0);
        // right-continuity: the level set itself is excluded
        assert_eq!(u.distribution(2.0), 0.2);
    }

    #[test]
    fn rearrange_examples() {
        let u = f(&[(1.0, 0.5), (3.0, 0.2), (2.0, 0.3)]);
        let r = u.rearrange();
        assert_eq!(r.plateau_values(), &[3.0, 2.0, 1.0]);
        assert_eq!(r.breakpoints(), &[0.0, 0.2, 0.5, 1.0]);
        for s in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5] {
            assert_eq!(u.distribution(s), r.distribution(s));
        }
        let again = r.to_field().unwrap().rearrange();
        assert_eq!(again, r);
        let c = AtomField::constant(0.7, 2.0).unwrap().rearrange();
        assert_eq!(c.plateau_values(), &[0.7]);
        assert_eq!(c.breakpoints(), &[0.0, 2.0]);
    }

    #[test]
    fn value_at_is_right_continuous() {
        let r = StepProfile::from_plateaus(&[(3.0, 0.2), (2.0, 0.3), (1.0, 0.5)]).unwrap();
        assert_eq!(r.value_at(0.0), 3.0);
        assert_eq!(r.value_at(0.2), 2.0);
        assert_eq!(r.value_at(0.49), 2.0);
        assert_eq!(r.value_at(0.5), 1.0);
        assert_eq!(r.value_at(1.0), 1.0);
    }

    #[test]
    fn l1_examples() {
        let u = f(&[(2.0, 0.5), (1.0, 0.5)]);
        let v = f(&[(1.5, 0.5), (1.0, 0.5)]);
        assert_eq!(l1_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(l1_distance(&u, &v).unwrap(), 0.25);
        let w = f(&[(2.0, 0.4), (1.0, 0.6)]);
        assert_eq!(l1_distance(&u, &w), Err(FieldError::Pairing));
    }

    #[test]
    fn profile_l1_examples() {
        let a = StepProfile::from_plateaus(&[(3.0, 0.2), (1.0, 0.8)]).unwrap();
        let b = StepProfile::from_plateaus(&[(2.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!((profile_l1_distance(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(profile_l1_distance(&a, &a).unwrap(), 0.0);
        let one = StepProfile::from_plateaus(&[(1.0, 1.0)]).unwrap();
        let two = StepProfile::from_plateaus(&[(2.0, 1.0)]).unwrap();
        assert_eq!(profile_l1_distance(&one, &two).unwrap(), 1.0);
        let wide = StepProfile::from_plateaus(&[(2.0, 2.0)]).unwrap();
        assert!(matches!(
            profile_l1_distance(&one, &wide),
            Err(FieldError::DomainMismatch(..))
        ));
    }

    #[test]
    fn staircase_repeats_breakpoints() {
        let r = StepProfile::from_plateaus(&[(3.0, 0.2), (1.0, 0.8)]).unwrap();
        assert_eq!(r.staircase(), vec![(0.0, 3.0), (0.2, 3.0), (0.2, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn profile_rejects_bad_shapes() {
        assert!(StepProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).is_err());
        assert!(StepProfile::new(vec![0.0, 0.5, 0.5], vec![2.0, 1.0]).is_err());
        assert!(StepProfile::new(vec![0.0, 1.0], vec![]).is_err());
    }
}
