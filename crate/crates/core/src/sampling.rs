//! Instrumental densities for importance-sampled acquisition.
//!
//! The variance-optimal proposal for the weighted quadratic risk is `q_θ ∝ p·g_θ` with
//! `g_θ(x) = √(f(1−f)⁴ + (1−f)f⁴)`, `f = f_θ(x)`. It is mixed with the marginal,
//! `q_{θ,ε} = εp + (1−ε)q_θ`, which caps every likelihood ratio `p/q` below `1/ε`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{fragility_pair, FragilityParams};
use crate::quadrature;
use crate::scalar::{count, lit, to_f64, Scalar};
use crate::{Error, Result};

/// Supremum of `g_θ` over `f ∈ [0, 1]`, reached where `f(1−f) = 1/6`.
pub const MAX_OPTIMAL_WEIGHT: f64 = 0.288_675_134_594_812_9;

/// `g` as a function of the fragility value and its complement.
pub fn optimal_weight_from_prob<S: Scalar>(f: S, sf: S) -> S {
    (f * sf * (f * f * f + sf * sf * sf)).sqrt()
}

/// The `p`-independent factor `g_θ(x)` of the optimal instrumental density.
pub fn optimal_weight<S: Scalar>(theta: &FragilityParams<S>, x: S) -> S {
    let (f, sf) = fragility_pair(theta, x);
    optimal_weight_from_prob(f, sf)
}

/// Marginal density `p` of the log-IM.
#[derive(Debug, Clone)]
pub enum MarginalModel<S> {
    AnalyticGaussian {
        mean: S,
        variance: S,
    },
    /// Uniform weights over a finite pool of log-IM values.
    PoolEmpirical(Arc<[S]>),
}

impl<S: Scalar> MarginalModel<S> {
    pub fn pool(xs: Vec<S>) -> Self {
        Self::PoolEmpirical(xs.into())
    }

    pub fn pool_len(&self) -> Option<usize> {
        match self {
            Self::PoolEmpirical(xs) => Some(xs.len()),
            Self::AnalyticGaussian { .. } => None,
        }
    }

    pub fn pool_values(&self) -> Option<&[S]> {
        match self {
            Self::PoolEmpirical(xs) => Some(xs),
            Self::AnalyticGaussian { .. } => None,
        }
    }

    /// Builds `q_{θ,ε}` for this marginal.
    pub fn defensive(&self, theta: &FragilityParams<S>, epsilon: S) -> Result<DefensiveDensity<S>> {
        check_epsilon(epsilon, false)?;
        match self {
            Self::PoolEmpirical(xs) => {
                if xs.is_empty() {
                    return Err(Error::EmptyPool);
                }
                let g: Vec<S> = xs.iter().map(|&x| optimal_weight(theta, x)).collect();
                Ok(DefensiveDensity::from_weights(xs.clone(), &g, *theta, epsilon))
            }
            &Self::AnalyticGaussian { mean, variance } => {
                if !(variance > S::zero()) {
                    return Err(Error::InvalidArgument("Gaussian marginal needs positive variance".into()));
                }
                let (m, sd) = (to_f64(mean), to_f64(variance).sqrt());
                let th = FragilityParams::new(to_f64(theta.alpha), to_f64(theta.beta));
                let z = if epsilon == S::one() {
                    // q = p: the instrumental part carries no mass, so its normaliser is irrelevant
                    1.0
                } else {
                    let integrand = |x: f64| gaussian_pdf(x, m, sd) * optimal_weight(&th, x);
                    quadrature::integrate(integrand, m - 8.0 * sd, m + 8.0 * sd, 1e-8).value
                };
                let degenerate = !(z > 0.0) || !z.is_finite();
                Ok(DefensiveDensity {
                    theta: *theta,
                    epsilon,
                    degenerate,
                    support: Support::Gaussian { mean: m, sd, normalizer: z },
                })
            }
        }
    }
}

fn check_epsilon<S: Scalar>(epsilon: S, allow_zero: bool) -> Result<()> {
    let lo_ok = if allow_zero { epsilon >= S::zero() } else { epsilon > S::zero() };
    if lo_ok && epsilon <= S::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("defensive mixing weight {epsilon} outside (0, 1]")))
    }
}

fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// One acquisition from a defensive density. The ratio is frozen at draw time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord<S> {
    /// Pool index; `None` for draws from an analytic marginal.
    pub index: Option<usize>,
    pub x: S,
    pub likelihood_ratio: S,
    pub theta_at_draw: FragilityParams<S>,
}

#[derive(Debug, Clone)]
enum Support<S> {
    Pool { xs: Arc<[S]>, probs: Vec<S>, cumulative: Vec<S>, ratios: Vec<S> },
    Gaussian { mean: f64, sd: f64, normalizer: f64 },
}

/// `q_{θ,ε}` over a pool or an analytic Gaussian marginal.
#[derive(Debug, Clone)]
pub struct DefensiveDensity<S> {
    pub theta: FragilityParams<S>,
    pub epsilon: S,
    /// Set when `Σ g_θ = 0`; the density then falls back to `q = p`.
    pub degenerate: bool,
    support: Support<S>,
}

/// `1 / (ε + (1−ε)t)` for `t = q_θ/p ≥ 0`.
///
/// `q_θ > 0` at every finite point, so the exact ratio is strictly below `1/ε` whenever
/// `ε < 1`. When `t` is too small to move `ε` in floating point the quotient rounds up onto
/// the bound; it is then rounded down instead, which keeps the result a faithful rounding.
fn defensive_ratio<S: Scalar>(epsilon: S, t: S) -> S {
    let r = S::one() / (epsilon + (S::one() - epsilon) * t);
    if epsilon < S::one() {
        let cap = S::one() / epsilon;
        if r >= cap {
            return cap * (S::one() - S::epsilon());
        }
    }
    r
}

impl<S: Scalar> DefensiveDensity<S> {
    /// Pool density from explicit instrumental weights `g_j ≥ 0`:
    /// `q_j = ε/N + (1−ε)·g_j/Σg`, ratio `(1/N)/q_j`. Here `ε = 0` is accepted.
    pub fn from_weights(xs: Arc<[S]>, g: &[S], theta: FragilityParams<S>, epsilon: S) -> Self {
        assert_eq!(xs.len(), g.len(), "one weight per pool point");
        let n = xs.len();
        let nn = count::<S>(n);
        let total: S = g.iter().copied().sum();
        let degenerate = !(total > S::zero()) || !total.is_finite();
        let (probs, ratios): (Vec<S>, Vec<S>) = if degenerate {
            (vec![S::one() / nn; n], vec![S::one(); n])
        } else {
            g.iter()
                .map(|&gj| {
                    let share = gj / total;
                    let q = epsilon / nn + (S::one() - epsilon) * share;
                    (q, defensive_ratio(epsilon, nn * share))
                })
                .unzip()
        };
        let mut acc = S::zero();
        let cumulative = probs
            .iter()
            .map(|&q| {
                acc = acc + q;
                acc
            })
            .collect();
        Self { theta, epsilon, degenerate, support: Support::Pool { xs, probs, cumulative, ratios } }
    }

    pub fn is_pool(&self) -> bool {
        matches!(self.support, Support::Pool { .. })
    }

    /// Normalised pool probabilities `q_j`.
    pub fn weights(&self) -> Option<&[S]> {
        match &self.support {
            Support::Pool { probs, .. } => Some(probs),
            Support::Gaussian { .. } => None,
        }
    }

    /// Per-point likelihood ratios `p_j/q_j`.
    pub fn likelihood_ratios(&self) -> Option<&[S]> {
        match &self.support {
            Support::Pool { ratios, .. } => Some(ratios),
            Support::Gaussian { .. } => None,
        }
    }

    /// `p(x)/q(x)` at an arbitrary log-IM (analytic marginal only).
    pub fn ratio_at_x(&self, x: S) -> Option<S> {
        match &self.support {
            Support::Gaussian { normalizer, .. } => {
                if self.degenerate {
                    return Some(S::one());
                }
                let t = optimal_weight(&self.theta, x) / lit(*normalizer);
                Some(defensive_ratio(self.epsilon, t))
            }
            Support::Pool { .. } => None,
        }
    }

    /// Ratio this density assigns to a previously drawn point.
    pub fn ratio_for(&self, draw: &DrawRecord<S>) -> S {
        match (&self.support, draw.index) {
            (Support::Pool { ratios, .. }, Some(i)) => ratios[i],
            (Support::Gaussian { .. }, _) => self.ratio_at_x(draw.x).expect("analytic support"),
            (Support::Pool { .. }, None) => panic!("pool density queried with an off-pool draw"),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DrawRecord<S> {
        match &self.support {
            Support::Pool { xs, cumulative, ratios, .. } => {
                let total = *cumulative.last().expect("nonempty pool");
                let u = lit::<S>(rng.random::<f64>()) * total;
                let i = cumulative.partition_point(|&c| c <= u).min(xs.len() - 1);
                DrawRecord { index: Some(i), x: xs[i], likelihood_ratio: ratios[i], theta_at_draw: self.theta }
            }
            &Support::Gaussian { mean, sd, .. } => {
                let normal = Normal::new(mean, sd).expect("positive sd");
                let eps = to_f64(self.epsilon);
                let x = if self.degenerate || rng.random::<f64>() < eps {
                    normal.sample(rng)
                } else {
                    let th = FragilityParams::new(to_f64(self.theta.alpha), to_f64(self.theta.beta));
                    loop {
                        let x = normal.sample(rng);
                        if rng.random::<f64>() * MAX_OPTIMAL_WEIGHT < optimal_weight(&th, x) {
                            break x;
                        }
                    }
                };
                let x = lit::<S>(x);
                let ratio = self.ratio_at_x(x).expect("analytic support");
                DrawRecord { index: None, x, likelihood_ratio: ratio, theta_at_draw: self.theta }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn theta() -> FragilityParams<f64> {
        FragilityParams::new(0.3, 0.4)
    }

    #[test]
    fn optimal_weight_values() {
        assert_eq!(optimal_weight_from_prob(0.0f64, 1.0), 0.0);
        assert_eq!(optimal_weight_from_prob(1.0f64, 0.0), 0.0);
        assert!((optimal_weight_from_prob(0.5f64, 0.5) - 0.25).abs() < 1e-16);
        let peak_f = 0.5 - (1.0f64 / 12.0).sqrt();
        let peak = optimal_weight_from_prob(peak_f, 1.0 - peak_f);
        assert!((peak - MAX_OPTIMAL_WEIGHT).abs() < 1e-12);
    }

    #[test]
    fn hand_normalised_weights() {
        let xs: Arc<[f64]> = vec![0.0, 1.0, 2.0].into();
        let d = DefensiveDensity::from_weights(xs, &[0.0, 1.0, 1.0], theta(), 0.0);
        assert_eq!(d.weights().unwrap(), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn pure_defensive_limit() {
        let m = MarginalModel::pool((0..50).map(|i| -3.0 + 0.1 * i as f64).collect());
        let d = m.defensive(&theta(), 1.0).unwrap();
        assert!(d.likelihood_ratios().unwrap().iter().all(|&r| r == 1.0));
    }

    #[test]
    fn ratio_bound_small_epsilon() {
        let m = MarginalModel::pool((0..2000).map(|i| -12.0 + 0.01 * i as f64).collect());
        let d = m.defensive(&theta(), 1e-3).unwrap();
        let max = d.likelihood_ratios().unwrap().iter().cloned().fold(0.0, f64::max);
        assert!(max < 1000.0, "{max}");
    }

    #[test]
    fn flat_fragility_is_degenerate() {
        // every point sits far in the upper tail: g underflows to zero
        let m = MarginalModel::pool(vec![40.0, 41.0, 42.0]);
        let d = m.defensive(&FragilityParams::new(1e-3, 0.05), 0.5).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.likelihood_ratios().unwrap(), &[1.0; 3]);
    }

    #[test]
    fn epsilon_validated() {
        let m = MarginalModel::pool(vec![0.0]);
        assert!(m.defensive(&theta(), 0.0).is_err());
        assert!(m.defensive(&theta(), 1.5).is_err());
    }

    #[test]
    fn one_point_pool() {
        let m = MarginalModel::pool(vec![0.2]);
        let d = m.defensive(&theta(), 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = d.draw(&mut rng);
        assert_eq!(r.index, Some(0));
        assert!((r.likelihood_ratio - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seeded_draws_repeat() {
        let m = MarginalModel::pool((0..100).map(|i| -4.0 + 0.05 * i as f64).collect());
        let d = m.defensive(&theta(), 0.01).unwrap();
        let a = d.draw(&mut ChaCha8Rng::seed_from_u64(42));
        let b = d.draw(&mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn analytic_ratio_bounded_and_normalised() {
        let m = MarginalModel::AnalyticGaussian { mean: (0.3f64 / 5.0).ln(), variance: 1.69 };
        let d = m.defensive(&theta(), 1e-3).unwrap();
        // ∫ p/r = ∫ q = 1
        let (mean, sd) = ((0.06f64).ln(), 1.3);
        let mass = quadrature::integrate(
            |x| gaussian_pdf(x, mean, sd) / d.ratio_at_x(x).unwrap(),
            mean - 8.0 * sd,
            mean + 8.0 * sd,
            1e-10,
        );
        assert!((mass.value - 1.0).abs() < 1e-7, "{}", mass.value);
        for i in 0..200 {
            let x = -15.0 + 0.1 * i as f64;
            assert!(d.ratio_at_x(x).unwrap() < 1000.0);
        }
    }
}
