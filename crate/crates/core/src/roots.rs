//! Bisection for monotone scalar equations.

/// Outcome of [`bisect`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracketed {
    pub root: f64,
    pub iterations: u32,
    /// Final bracket width.
    pub width: f64,
}

/// Finds `x ∈ [lo, hi]` with `f(x) = 0`, given `f(lo) ≤ 0 ≤ f(hi)`.
///
/// Stops when the bracket cannot shrink further in floating point, when an
/// exact zero is hit, or after `max_iter` halvings. Returns `None` if the
/// endpoints do not bracket a sign change or `f` is not finite there.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, max_iter: u32) -> Option<Bracketed>
where
    F: Fn(f64) -> f64,
{
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo <= 0.0 && f_hi >= 0.0) {
        return None;
    }
    if f_lo == 0.0 {
        return Some(Bracketed { root: lo, iterations: 0, width: hi - lo });
    }
    if f_hi == 0.0 {
        return Some(Bracketed { root: hi, iterations: 0, width: hi - lo });
    }
    let mut iterations = 0;
    while iterations < max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let fm = f(mid);
        if fm == 0.0 {
            return Some(Bracketed { root: mid, iterations, width: 0.0 });
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(Bracketed {
        root: 0.5 * (lo + hi),
        iterations,
        width: hi - lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 200).unwrap();
        assert!((r.root - 2f64.sqrt()).abs() < 4e-16);
    }

    #[test]
    fn rejects_unbracketed() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 200).is_none());
        assert!(bisect(|_| f64::NAN, -1.0, 1.0, 200).is_none());
    }

    #[test]
    fn exact_endpoint_zero() {
        let r = bisect(|x| x - 1.0, 1.0, 3.0, 200).unwrap();
        assert_eq!(r.root, 1.0);
    }
}
