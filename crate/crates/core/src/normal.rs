//! Standard normal helpers.

use std::f64::consts::{PI, SQRT_2};

/// Standard normal CDF, `0.5 * erfc(-z / sqrt(2))`.
///
/// `erfc` is the FreeBSD/musl rational approximation (via `libm`), accurate to
/// about one ulp, so the result carries no cancellation in the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// `ln N(x; mean, variance)`.
pub fn log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * variance).ln() - d * d / (2.0 * variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.8413447).abs() < 1e-7);
        assert!((normal_cdf(-1.959963984540054) - 0.025).abs() < 1e-12);
        for z in [0.1, 0.5, 1.3, 3.0, 7.5] {
            assert!((normal_cdf(z) + normal_cdf(-z) - 1.0).abs() < 1e-12);
        }
        assert!(normal_cdf(-8.0) < 1e-7 && normal_cdf(-8.0) > 0.0);
    }

    #[test]
    fn log_pdf_standard() {
        assert!((log_pdf(0.0, 0.0, 1.0) + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((log_pdf(3.0, 1.0, 4.0) - (-0.5 * (8.0 * PI).ln() - 0.5)).abs() < 1e-15);
    }
}
