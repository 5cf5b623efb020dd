use std::io::{self, Write};

use crate::energy::LyapunovIndex;
use crate::field::AtomField;
use crate::model::HypothesisClass;

use super::Termination;

/// Recorded orbit. Every snapshot shares the initial weight vector and atom
/// order, so atom `j` of any snapshot is `Y(t; s_j)` for the initial value
/// `s_j`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<AtomField>,
    pub lambda_series: Vec<f64>,
    pub mass_series: Vec<f64>,
    pub energy_series: Vec<f64>,
    pub dissipation_series: Vec<f64>,
    pub termination: Termination,
    /// Classification of the initial field.
    pub hypothesis: HypothesisClass,
    pub energy_index: LyapunovIndex,
    pub stat_tol: f64,
    /// `max |rate|` at the last accepted state (NaN when the guard fired).
    pub final_max_rate: f64,
    /// `∫g(u)` at the last accepted state.
    pub final_denominator: f64,
}

impl Trajectory {
    pub(crate) fn empty(hypothesis: HypothesisClass, energy_index: LyapunovIndex, stat_tol: f64) -> Self {
        Self {
            times: Vec::new(),
            snapshots: Vec::new(),
            lambda_series: Vec::new(),
            mass_series: Vec::new(),
            energy_series: Vec::new(),
            dissipation_series: Vec::new(),
            termination: Termination::ReachedTmax,
            hypothesis,
            energy_index,
            stat_tol,
            final_max_rate: f64::NAN,
            final_denominator: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &AtomField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &AtomField {
        self.snapshots.last().expect("non-empty trajectory")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    /// Index of the recorded time closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&x| x < t);
        if i == 0 {
            0
        } else if i == self.times.len() {
            i - 1
        } else if (self.times[i] - t).abs() < (t - self.times[i - 1]).abs() {
            i
        } else {
            i - 1
        }
    }

    /// CSV with header `t,lambda,mass,energy,dissipation,v1,...,vn`, every
    /// number written with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.snapshots.first().map_or(0, AtomField::len);
        write!(w, "t,lambda,mass,energy,dissipation")?;
        for j in 1..=n {
            write!(w, ",v{j}")?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(
                w,
                "{},{},{},{},{}",
                fmt17(self.times[k]),
                fmt17(self.lambda_series[k]),
                fmt17(self.mass_series[k]),
                fmt17(self.energy_series[k]),
                fmt17(self.dissipation_series[k])
            )?;
            for v in self.snapshots[k].values() {
                write!(w, ",{}", fmt17(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// 17 significant digits in scientific notation; round-trips every `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
