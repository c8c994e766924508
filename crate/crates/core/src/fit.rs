//! Small least-squares helpers used by trend classification and constant
//! extraction.

use crate::scalar::Real;

/// Ordinary least squares fit `y = a + b x`.
///
/// Returns `(a, b, r_squared)`, or `None` when fewer than two distinct
/// abscissae are given. A degenerate response (all `y` equal) reports
/// `r_squared = 1` with zero slope.
pub fn linear_fit<F: Real>(xs: &[F], ys: &[F]) -> Option<(F, F, F)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = F::of_usize(xs.len());
    let mean_x = xs.iter().copied().sum::<F>() / n;
    let mean_y = ys.iter().copied().sum::<F>() / n;
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    let mut syy = F::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == F::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy == F::zero() {
        F::one()
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Some((intercept, slope, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exact_line() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 - 0.5 * x).collect();
        let (a, b, r2) = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(a, 2.5, max_relative = 1e-12);
        assert_relative_eq!(b, -0.5, max_relative = 1e-12);
        assert_relative_eq!(r2, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn noisy_data_lowers_r_squared() {
        let xs = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let ys = [0.9, 2.3, 2.6, 4.4, 4.6];
        let (_, b, r2) = linear_fit(&xs, &ys).unwrap();
        assert!(b > 0.8 && b < 1.2);
        assert!(r2 > 0.9 && r2 < 1.0);
    }

    #[test]
    fn degenerate_inputs_are_none() {
        assert!(linear_fit::<f64>(&[1.0], &[2.0]).is_none());
        assert!(linear_fit::<f64>(&[2.0, 2.0], &[1.0, 3.0]).is_none());
    }
}
