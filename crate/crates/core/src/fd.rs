//! Central finite differences, the reference oracle for analytic gradients.

use crate::error::{Error, Result};

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    central_differences(f, x, |_| h)
}

/// Like [`finite_diff_gradient`] with a per-coordinate step `h·(1 + |xᵢ|)`.
pub fn finite_diff_gradient_scaled<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    central_differences(f, x, |xi| h * (1.0 + xi.abs()))
}

fn central_differences<F, S>(f: F, x: &[f64], step: S) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
    S: Fn(f64) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step(x[i]);
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
        }
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::OracleFailure { coordinate: i });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest relative error `|a − b| / max(1, |b|)` between two gradients.
pub fn max_relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn square() {
        let g = finite_diff_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_is_flat() {
        let g = finite_diff_gradient(|_| 4.2, &[1.0, -2.0, 3.0], 1e-5).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rosenbrock_stationary() {
        let g = finite_diff_gradient(rosenbrock, &[1.0, 1.0], 1e-5).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-5), "{g:?}");
    }

    #[test]
    fn names_failing_coordinate() {
        let err = finite_diff_gradient(|x| if x[1] > 0.5 { f64::NAN } else { 0.0 }, &[0.0, 0.5], 0.1).unwrap_err();
        assert!(matches!(err, Error::OracleFailure { coordinate: 1 }));
    }
}
