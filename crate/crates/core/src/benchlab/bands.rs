use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::quantile_type7;
use crate::linalg::{Mat2, Vec2};
use crate::model::{fragility_prob, FragilityParams, ParamBounds};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    /// Log-IM.
    pub x: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pointwise `[lower_q, upper_q]` quantiles of the curves in `samples`, with the curve of
/// `center` as the point estimate.
pub fn fragility_band(
    center: &FragilityParams<f64>,
    samples: &[FragilityParams<f64>],
    grid: &[f64],
    lower_q: f64,
    upper_q: f64,
) -> Result<Vec<BandPoint>> {
    let mut vals = Vec::with_capacity(samples.len());
    grid.iter()
        .map(|&x| {
            let point = fragility_prob(center, x);
            vals.clear();
            vals.extend(samples.iter().map(|t| fragility_prob(t, x)));
            if vals.is_empty() {
                return Ok(BandPoint { x, point, lower: point, upper: point });
            }
            Ok(BandPoint { x, point, lower: quantile_type7(&vals, lower_q)?, upper: quantile_type7(&vals, upper_q)? })
        })
        .collect()
}

/// Principal square root of a symmetric PSD 2×2 matrix.
fn psd_sqrt(m: &Mat2<f64>) -> Mat2<f64> {
    let m = m.symmetrize();
    let s = m.det().max(0.0).sqrt();
    let t = (m.trace() + 2.0 * s).max(0.0).sqrt();
    if t == 0.0 {
        return Mat2::zero();
    }
    (m + Mat2::diag(s, s)).scale(1.0 / t)
}

/// Curve band from `draws` parameter samples of `N(θ̂, cov)`, clipped to Θ.
pub fn fragility_ci_from_asymptotics<R: Rng + ?Sized>(
    theta_hat: &FragilityParams<f64>,
    cov: &Mat2<f64>,
    bounds: &ParamBounds<f64>,
    grid: &[f64],
    draws: usize,
    band: (f64, f64),
    rng: &mut R,
) -> Result<Vec<BandPoint>> {
    let root = psd_sqrt(cov);
    let samples: Vec<_> = (0..draws)
        .map(|_| {
            let z = Vec2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
            bounds.clamp(&FragilityParams::from_vec(theta_hat.as_vec() + root.mul_vec(&z)))
        })
        .collect();
    fragility_band(theta_hat, &samples, grid, band.0, band.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_squares_back() {
        let m = Mat2([[0.04, 0.01], [0.01, 0.09]]);
        let r = psd_sqrt(&m);
        assert!((r * r - m).frobenius() < 1e-15);
        assert_eq!(psd_sqrt(&Mat2::zero()), Mat2::zero());
    }

    #[test]
    fn band_behaviour() {
        let t = FragilityParams::new(0.3, 0.4);
        let grid: Vec<f64> = (0..41).map(|i| -4.0 + 0.1 * i as f64).collect();
        let b = ParamBounds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let flat = fragility_ci_from_asymptotics(&t, &Mat2::zero(), &b, &grid, 100, (0.05, 0.95), &mut rng).unwrap();
        assert!(flat.iter().all(|p| p.lower == p.point && p.upper == p.point));
        let cov = Mat2([[1e-3, 0.0], [0.0, 4e-3]]);
        let wide = fragility_ci_from_asymptotics(&t, &cov, &b, &grid, 500, (0.05, 0.95), &mut rng).unwrap();
        assert!(wide.iter().all(|p| p.lower <= p.point && p.point <= p.upper));
        assert!(wide.iter().any(|p| p.upper - p.lower > 0.05));
    }
}
