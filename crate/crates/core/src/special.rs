//! Standard normal distribution functions.

use crate::scalar::{lit, to_f64, Scalar};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF, evaluated through `erfc` so both tails keep full relative precision.
pub fn norm_cdf<S: Scalar>(z: S) -> S {
    lit(0.5 * libm::erfc(-to_f64(z) * std::f64::consts::FRAC_1_SQRT_2))
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn norm_sf<S: Scalar>(z: S) -> S {
    norm_cdf(-z)
}

pub fn norm_pdf<S: Scalar>(z: S) -> S {
    let z = to_f64(z);
    lit(FRAC_1_SQRT_2PI * (-0.5 * z * z).exp())
}

/// `ln Φ(z)`, finite for every finite `z`.
pub fn log_norm_cdf<S: Scalar>(z: S) -> S {
    let z = to_f64(z);
    if z > -30.0 {
        return lit((0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)).ln());
    }
    // Mills-ratio asymptotic series; the truncation error is below 1e-12 here.
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    lit(-0.5 * z2 - (-z).ln() + FRAC_1_SQRT_2PI.ln() + series.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series of erf, summed in f64; converges quickly for |x| <= 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-20 {
            n += 1.0;
            term *= -x * x / n;
            sum += term / (2.0 * n + 1.0);
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn cdf_matches_series_oracle() {
        for i in -30..=30 {
            let z = i as f64 / 10.0;
            let oracle = 0.5 * (1.0 + erf_series(z / std::f64::consts::SQRT_2));
            assert!((norm_cdf(z) - oracle).abs() < 1e-15, "z={z}");
        }
        assert!((norm_cdf(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-15);
    }

    #[test]
    fn tails_are_complementary() {
        for &z in &[-8.0, -3.0, 0.0, 2.5, 7.0f64] {
            assert!((norm_cdf(z) + norm_sf(z) - 1.0).abs() < 1e-15);
        }
        assert!(norm_sf(10.0f64) > 0.0);
    }

    #[test]
    fn log_cdf_is_continuous_across_branch() {
        let a: f64 = log_norm_cdf(-29.999_999);
        let b: f64 = log_norm_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4);
        assert!(log_norm_cdf(-200.0f64).is_finite());
        assert!((log_norm_cdf(0.0f64) - 0.5f64.ln()).abs() < 1e-15);
    }
}
