//! Central finite-difference gradient checking.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest element-wise relative error `|a - n| / max(|a|, |n|, floor)`.
///
/// `floor` keeps entries that are zero in both gradients from dividing by
/// zero; their absolute error is compared against it instead.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1] - x[1].powi(3);
        let x = [0.7, -1.3];
        let num = central_difference(f, &x, 1e-5);
        let exact = [2.0 * 0.7 + 3.0 * -1.3, 3.0 * 0.7 - 3.0 * 1.69];
        assert!(max_relative_error(&exact, &num, 1e-8) < 1e-8);
    }

    #[test]
    fn floor_guards_zero_entries() {
        assert_eq!(max_relative_error(&[0.0, 1.0], &[0.0, 1.0], 1e-8), 0.0);
        assert!(max_relative_error(&[0.0], &[1e-9], 1e-6) <= 1e-3);
    }
}
