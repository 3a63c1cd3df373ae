//! Thin wrappers around the standard normal distribution.

use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn norm_quantile(p: f64) -> f64 {
    // statrs handles the tails well; avoid constructing per call in hot loops.
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Trapezoidal integral of uniformly spaced samples.
pub fn trapz(values: &[f64], dx: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    dx * (0.5 * (values[0] + values[values.len() - 1]) + inner)
}

/// Running trapezoidal integral; output has the same length as the input,
/// with `out[0] = 0`.
pub fn cumtrapz(values: &[f64], dx: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dx;
        out.push(acc);
    }
    out
}

/// Discrete L2 norm over uniformly spaced samples (trapezoidal quadrature of
/// the squared values).
pub fn l2_norm(values: &[f64], dx: f64) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    trapz(&sq, dx).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.0) - 0.8413447460685429).abs() < 1e-12);
        assert!((norm_cdf(-1.0) - 0.15865525393145707).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-6, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-6] {
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn trapz_linear_exact() {
        let v: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        assert!((trapz(&v, 0.1) - 5.0).abs() < 1e-14);
        let c = cumtrapz(&v, 0.1);
        assert_eq!(c.len(), v.len());
        assert!((c[10] - 5.0).abs() < 1e-14);
    }
}
