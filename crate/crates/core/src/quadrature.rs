//! Adaptive Simpson quadrature.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("adaptive Simpson did not reach tolerance {tol:e} on [{a}, {b}] within depth {max_depth}")]
pub struct QuadratureError {
    pub a: f64,
    pub b: f64,
    pub tol: f64,
    pub max_depth: u32,
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Works for `b < a` (the result changes sign). Fails when a panel still
/// misses its share of the tolerance at `max_depth`, or when `f` produces a
/// non-finite value.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    let err = QuadratureError {
        a,
        b,
        tol,
        max_depth,
    };
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, max_depth)
        .filter(|v| v.is_finite())
        .ok_or(err)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return None;
    }
    // A panel is done when it meets its share of the tolerance, when the
    // difference is at the roundoff level of the panel sums (large
    // integrands cannot meet a tiny absolute tolerance), or when it is
    // narrower than a few ulps.
    let roundoff = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if delta.abs() <= 15.0 * tol.max(roundoff) || (m - a).abs() <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_exact() {
        let v = adaptive_simpson(|t| t * t * t, 0.0, 2.0, 1e-12, 40).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
        let v = adaptive_simpson(|t| t, 0.0, -3.0, 1e-12, 40).unwrap();
        assert!((v - 4.5).abs() < 1e-14);
    }

    #[test]
    fn smooth_transcendental() {
        let v = adaptive_simpson(f64::exp, 0.0, 1.5, 1e-12, 40).unwrap();
        assert!((v - 1.5_f64.exp_m1()).abs() < 1e-11);
        let v = adaptive_simpson(f64::tanh, -1.0, 2.0, 1e-12, 40).unwrap();
        let exact = 2.0_f64.cosh().ln() - 1.0_f64.cosh().ln();
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn non_convergence_reported() {
        // 1/sqrt singularity at 0 cannot meet the tolerance at depth 5.
        let r = adaptive_simpson(|t: f64| 1.0 / t.abs().sqrt().max(1e-300), 0.0, 1.0, 1e-12, 5);
        assert!(r.is_err());
        let nan = adaptive_simpson(|_| f64::NAN, 0.0, 1.0, 1e-12, 40);
        assert!(nan.is_err());
    }
}
