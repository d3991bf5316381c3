use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::estimators::{mle_refit, LabeledPoint, Provenance, WeightedDataset};
use crate::inference::Ellipsoid;
use crate::linalg::Mat2;
use crate::model::{FragilityParams, ParamBounds};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCov {
    /// `(1/B) Σ n(θ*_b − θ̂)(θ*_b − θ̂)ᵀ` over the kept resamples.
    pub cov: Mat2<f64>,
    pub thetas: Vec<FragilityParams<f64>>,
    pub dropped: usize,
    pub n: usize,
}

impl BootstrapCov {
    pub fn ellipsoid(&self, center: FragilityParams<f64>, xi: f64) -> Result<Ellipsoid<f64>> {
        Ellipsoid::new(center, self.cov.scale(1.0 / self.n as f64), xi)
    }
}

/// Nonparametric bootstrap of the MLE: `b` resamples of size `n` with replacement, each refit
/// from `theta_hat`. Single-label resamples are dropped and counted.
pub fn bootstrap_mle_cov<R: Rng + ?Sized>(
    data: &[LabeledPoint<f64>],
    theta_hat: &FragilityParams<f64>,
    b: usize,
    bounds: &ParamBounds<f64>,
    rng: &mut R,
) -> Result<BootstrapCov> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if b == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
    }
    let mut thetas = Vec::with_capacity(b);
    let mut dropped = 0;
    let mut sample = WeightedDataset::new(Vec::with_capacity(n), Provenance::Mle);
    for _ in 0..b {
        sample.points.clear();
        sample.points.extend((0..n).map(|_| data[rng.random_range(0..n)]));
        if sample.single_label() {
            dropped += 1;
            continue;
        }
        thetas.push(mle_refit(&sample, bounds, theta_hat)?.theta_hat);
    }
    if 2 * dropped > b {
        return Err(Error::TooManyDegenerate { dropped, total: b });
    }
    let mut cov = Mat2::zero();
    for t in &thetas {
        let d = t.as_vec() - theta_hat.as_vec();
        cov += d.outer(&d);
    }
    let cov = cov.scale(n as f64 / thetas.len() as f64);
    Ok(BootstrapCov { cov, thetas, dropped, n })
}
