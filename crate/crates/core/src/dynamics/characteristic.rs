use crate::model::NonlinearityPair;

use super::{DynamicsError, Trajectory};

/// Largest substep used between two recorded times.
const MAX_SUBSTEP: f64 = 1e-3;

/// Piecewise-cubic Hermite interpolant of `λ(t)`, slopes from three-point
/// differences on the (possibly non-uniform) sample grid.
struct LambdaInterpolant<'a> {
    times: &'a [f64],
    values: &'a [f64],
    slopes: Vec<f64>,
}

impl<'a> LambdaInterpolant<'a> {
    fn new(times: &'a [f64], values: &'a [f64]) -> Self {
        let n = times.len();
        let mut slopes = vec![0.0; n];
        if n >= 2 {
            slopes[0] = (values[1] - values[0]) / (times[1] - times[0]);
            slopes[n - 1] = (values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2]);
        }
        for i in 1..n.saturating_sub(1) {
            let (h0, h1) = (times[i] - times[i - 1], times[i + 1] - times[i]);
            let (d0, d1) = ((values[i] - values[i - 1]) / h0, (values[i + 1] - values[i]) / h1);
            slopes[i] = (h1 * d0 + h0 * d1) / (h0 + h1);
        }
        Self { times, values, slopes }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 1 {
            return self.values[0];
        }
        let i = self.times[1..n - 1].partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.values[i] + h10 * h * self.slopes[i] + h01 * self.values[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Follows a passive tracer `Ẏ = g(Y)(p(Y) - λ(t))`, `Y(0) = s0`, with `λ`
/// interpolated from the companion trajectory. Returns `Y` at each recorded
/// time of the companion.
pub fn characteristic_flow(
    s0: f64,
    companion: &Trajectory,
    pair: &NonlinearityPair,
) -> Result<Vec<f64>, DynamicsError> {
    let times = &companion.times;
    let lambda = LambdaInterpolant::new(times, &companion.lambda_series);
    let rate = |t: f64, y: f64| pair.g(y) * (pair.p(y) - lambda.eval(t));
    let mut out = Vec::with_capacity(times.len());
    let mut y = s0;
    out.push(y);
    for w in times.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let substeps = ((tb - ta) / MAX_SUBSTEP).ceil().max(1.0) as usize;
        let h = (tb - ta) / substeps as f64;
        for j in 0..substeps {
            let t = ta + j as f64 * h;
            let k1 = rate(t, y);
            let k2 = rate(t + 0.5 * h, y + 0.5 * h * k1);
            let k3 = rate(t + 0.5 * h, y + 0.5 * h * k2);
            let k4 = rate(t + h, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !y.is_finite() {
            let last_good = Box::new(crate::field::AtomField::constant(*out.last().unwrap(), 1.0)?);
            return Err(DynamicsError::NumericalFailure {
                t: tb,
                reason: format!("tracer from {s0} became non-finite"),
                last_good,
            });
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics_on_uniform_grid_interior() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let values: Vec<f64> = times.iter().map(|t| 1.0 + 2.0 * t - t * t).collect();
        let it = LambdaInterpolant::new(&times, &values);
        // Three-point slopes are exact for quadratics.
        for k in 0..200 {
            let t = 0.1 + k as f64 * 0.009;
            assert!((it.eval(t) - (1.0 + 2.0 * t - t * t)).abs() < 1e-13);
        }
    }
}
