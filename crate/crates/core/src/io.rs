//! Plain-text plot data shared by the command line and the tests.

use std::io::{self, Write};

use crate::dynamics::fmt17;
use crate::field::{AtomField, StepProfile};

/// Gnuplot-ready staircase: one `y value` pair per line, two points per
/// plateau.
pub fn write_staircase<W: Write>(profile: &StepProfile, mut w: W) -> io::Result<()> {
    writeln!(w, "# y value")?;
    for (y, v) in profile.staircase() {
        writeln!(w, "{} {}", fmt17(y), fmt17(v))?;
    }
    Ok(())
}

/// Distribution function `μ(s) = |{u > s}|` at every distinct value of `u`
/// and just below the smallest one, in decreasing order of `s`.
pub fn write_distribution<W: Write>(u: &AtomField, mut w: W) -> io::Result<()> {
    let profile = u.rearrange();
    writeln!(w, "# s mu(s)")?;
    for &s in profile.plateau_values() {
        writeln!(w, "{} {}", fmt17(s), fmt17(u.distribution(s)))?;
    }
    let below = profile.plateau_values().last().copied().unwrap_or(0.0);
    let below = below - below.abs().max(1.0);
    writeln!(w, "{} {}", fmt17(below), fmt17(u.distribution(below)))?;
    Ok(())
}
