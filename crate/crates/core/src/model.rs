//! Lognormal fragility model `f_θ(x) = Φ((x − ln α)/β)` over `x = ln IM`, the quadratic loss
//! and the `β_reg/β` penalty, each with closed-form first and second derivatives in θ.

use serde::{Deserialize, Serialize};

use crate::linalg::{Mat2, Vec2};
use crate::scalar::{lit, Scalar};
use crate::special::{norm_cdf, norm_pdf, norm_sf};

/// θ = (α, β): median capacity in IM units and log-standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragilityParams<S> {
    pub alpha: S,
    pub beta: S,
}

impl<S: Scalar> FragilityParams<S> {
    pub fn new(alpha: S, beta: S) -> Self {
        Self { alpha, beta }
    }

    pub fn as_vec(&self) -> Vec2<S> {
        Vec2::new(self.alpha, self.beta)
    }

    pub fn from_vec(v: Vec2<S>) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn midpoint(&self, other: &Self) -> Self {
        let h = lit::<S>(0.5);
        Self::new((self.alpha + other.alpha) * h, (self.beta + other.beta) * h)
    }
}

/// Compact parameter set Θ = [α_lo, α_hi] × [β_lo, β_hi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds<S> {
    pub alpha: (S, S),
    pub beta: (S, S),
}

impl<S: Scalar> Default for ParamBounds<S> {
    fn default() -> Self {
        Self { alpha: (lit(1e-3), lit(1e2)), beta: (lit(0.05), lit(2.0)) }
    }
}

impl<S: Scalar> ParamBounds<S> {
    pub fn new(alpha: (S, S), beta: (S, S)) -> crate::Result<Self> {
        let ok = alpha.0 > S::zero() && alpha.0 < alpha.1 && beta.0 > S::zero() && beta.0 < beta.1;
        if !ok || !alpha.1.is_finite() || !beta.1.is_finite() {
            return Err(crate::Error::InvalidArgument(format!(
                "parameter bounds must satisfy 0 < lo < hi < inf, got alpha {alpha:?} beta {beta:?}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn contains(&self, t: &FragilityParams<S>) -> bool {
        t.alpha >= self.alpha.0 && t.alpha <= self.alpha.1 && t.beta >= self.beta.0 && t.beta <= self.beta.1
    }

    pub fn clamp(&self, t: &FragilityParams<S>) -> FragilityParams<S> {
        FragilityParams::new(t.alpha.max(self.alpha.0).min(self.alpha.1), t.beta.max(self.beta.0).min(self.beta.1))
    }

    /// True when a coordinate lies within `rel·range` of a bound. α is measured on a log scale.
    pub fn on_boundary(&self, t: &FragilityParams<S>, rel: S) -> bool {
        let (la0, la1) = (self.alpha.0.ln(), self.alpha.1.ln());
        let la = t.alpha.ln();
        let ta = rel * (la1 - la0);
        let tb = rel * (self.beta.1 - self.beta.0);
        la - la0 <= ta || la1 - la <= ta || t.beta - self.beta.0 <= tb || self.beta.1 - t.beta <= tb
    }
}

/// Value, gradient and Hessian of a scalar function of θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle<S> {
    pub value: S,
    pub grad: Vec2<S>,
    pub hess: Mat2<S>,
}

impl<S: Scalar> LossBundle<S> {
    pub fn zero() -> Self {
        Self { value: S::zero(), grad: Vec2::zero(), hess: Mat2::zero() }
    }

    pub fn scaled(&self, c: S) -> Self {
        Self { value: self.value * c, grad: self.grad.scale(c), hess: self.hess.scale(c) }
    }

    pub fn accumulate(&mut self, other: &Self, weight: S) {
        self.value = self.value + other.value * weight;
        self.grad += other.grad.scale(weight);
        self.hess += other.hess.scale(weight);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig<S> {
    pub beta_reg: S,
}

impl<S: Scalar> RegularizerConfig<S> {
    pub fn none() -> Self {
        Self { beta_reg: S::zero() }
    }
}

/// `f_θ(x)` together with its complement and derivatives in θ.
#[derive(Debug, Clone, Copy)]
pub struct FragilityDerivs<S> {
    pub prob: S,
    /// `1 − f_θ(x)`, computed from the opposite tail.
    pub survival: S,
    pub grad: Vec2<S>,
    pub hess: Mat2<S>,
}

#[inline]
fn standardize<S: Scalar>(theta: &FragilityParams<S>, x: S) -> S {
    (x - theta.alpha.ln()) / theta.beta
}

pub fn fragility_prob<S: Scalar>(theta: &FragilityParams<S>, x: S) -> S {
    norm_cdf(standardize(theta, x))
}

/// `(f, 1 − f)` with both tails at full precision.
pub fn fragility_pair<S: Scalar>(theta: &FragilityParams<S>, x: S) -> (S, S) {
    let z = standardize(theta, x);
    (norm_cdf(z), norm_sf(z))
}

pub fn fragility_derivs<S: Scalar>(theta: &FragilityParams<S>, x: S) -> FragilityDerivs<S> {
    let (a, b) = (theta.alpha, theta.beta);
    let z = standardize(theta, x);
    let phi = norm_pdf(z);
    // z = (x − ln α)/β
    let dz = Vec2::new(-S::one() / (a * b), -z / b);
    let two = lit::<S>(2.0);
    let d2z = Mat2([[S::one() / (a * a * b), S::one() / (a * b * b)], [S::one() / (a * b * b), two * z / (b * b)]]);
    // φ'(z) = −z φ(z)
    let hess = (d2z - dz.outer(&dz).scale(z)).scale(phi);
    FragilityDerivs { prob: norm_cdf(z), survival: norm_sf(z), grad: dz.scale(phi), hess }
}

/// Residual `s − f` using the complementary tail when `s = 1`.
#[inline]
fn residual<S: Scalar>(s: bool, prob: S, survival: S) -> S {
    if s {
        survival
    } else {
        -prob
    }
}

pub fn quad_loss_value<S: Scalar>(theta: &FragilityParams<S>, x: S, s: bool) -> S {
    let (f, sf) = fragility_pair(theta, x);
    let r = residual(s, f, sf);
    r * r
}

/// `ℓ_θ(x, s) = (s − f_θ(x))²` with exact derivatives.
pub fn quad_loss<S: Scalar>(theta: &FragilityParams<S>, x: S, s: bool) -> LossBundle<S> {
    let d = fragility_derivs(theta, x);
    let r = residual(s, d.prob, d.survival);
    let two = lit::<S>(2.0);
    LossBundle {
        value: r * r,
        grad: d.grad.scale(-two * r),
        hess: d.grad.outer(&d.grad).scale(two) - d.hess.scale(two * r),
    }
}

/// `Ω(θ; β_reg) = β_reg / β`.
pub fn regularizer<S: Scalar>(theta: &FragilityParams<S>, cfg: &RegularizerConfig<S>) -> LossBundle<S> {
    let b = theta.beta;
    let r = cfg.beta_reg;
    LossBundle {
        value: r / b,
        grad: Vec2::new(S::zero(), -r / (b * b)),
        hess: Mat2([[S::zero(), S::zero()], [S::zero(), lit::<S>(2.0) * r / (b * b * b)]]),
    }
}

pub(crate) const LOG_CLAMP: f64 = 1e-12;

/// Negative Bernoulli log-likelihood of one observation, probabilities clamped to
/// `[1e-12, 1 − 1e-12]`; derivatives vanish where the clamp is active.
pub fn neg_log_lik<S: Scalar>(theta: &FragilityParams<S>, x: S, s: bool) -> LossBundle<S> {
    let d = fragility_derivs(theta, x);
    let lo = lit::<S>(LOG_CLAMP);
    // p is the probability of the observed outcome; dp = ∇p.
    let (p, dp, d2p) = if s { (d.prob, d.grad, d.hess) } else { (d.survival, -d.grad, d.hess.scale(-S::one())) };
    if p < lo {
        return LossBundle { value: -lo.ln(), grad: Vec2::zero(), hess: Mat2::zero() };
    }
    LossBundle {
        value: -p.ln(),
        grad: dp.scale(-S::one() / p),
        hess: dp.outer(&dp).scale(S::one() / (p * p)) - d2p.scale(S::one() / p),
    }
}

pub fn neg_log_lik_value<S: Scalar>(theta: &FragilityParams<S>, x: S, s: bool) -> S {
    let (f, sf) = fragility_pair(theta, x);
    let p = if s { f } else { sf };
    -p.max(lit(LOG_CLAMP)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn th(a: f64, b: f64) -> FragilityParams<f64> {
        FragilityParams::new(a, b)
    }

    #[test]
    fn median_gives_one_half() {
        let t = th(0.3, 0.4);
        assert!((fragility_prob(&t, 0.3f64.ln()) - 0.5).abs() < 1e-16);
        assert!((fragility_prob(&t, 0.3f64.ln() + 0.4) - 0.841_345).abs() < 1e-6);
        assert_eq!(fragility_prob(&t, f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn loss_symmetric_at_half() {
        let t = th(0.3, 0.4);
        let x = 0.3f64.ln();
        let one = quad_loss(&t, x, true);
        let zero = quad_loss(&t, x, false);
        assert!((one.value - 0.25).abs() < 1e-16);
        assert_eq!(one.value, zero.value);
        assert!((one.grad + zero.grad).norm() < 1e-16);
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let t = th(0.3, 0.4);
        let x = 0.6f64.ln();
        let b = quad_loss(&t, x, true);
        let h = 1e-6;
        let fa =
            (quad_loss_value(&th(0.3 + h, 0.4), x, true) - quad_loss_value(&th(0.3 - h, 0.4), x, true)) / (2.0 * h);
        let fb =
            (quad_loss_value(&th(0.3, 0.4 + h), x, true) - quad_loss_value(&th(0.3, 0.4 - h), x, true)) / (2.0 * h);
        assert!(((b.grad[0] - fa) / fa).abs() < 1e-5);
        assert!(((b.grad[1] - fb) / fb).abs() < 1e-5);
    }

    #[test]
    fn regularizer_values() {
        let zero = regularizer(&th(1.0, 0.4), &RegularizerConfig { beta_reg: 0.0 });
        assert_eq!(zero.value, 0.0);
        assert_eq!(zero.grad, Vec2::zero());
        let r = regularizer(&th(1.0, 0.1), &RegularizerConfig { beta_reg: 0.01 });
        assert!((r.value - 0.1).abs() < 1e-15);
        let r = regularizer(&th(1.0, 0.4), &RegularizerConfig { beta_reg: 0.01 });
        assert!((r.value - 0.025).abs() < 1e-15);
        assert!((r.grad[1] + 0.0625).abs() < 1e-15);
        assert!((r.hess.get(1, 1) - 2.0 * 0.01 / 0.064).abs() < 1e-13);
    }

    #[test]
    fn partial_signs_on_grid() {
        for i in 0..20 {
            for j in 0..20 {
                let t = th(0.05 + 0.1 * i as f64, 0.1 + 0.05 * j as f64);
                for k in -30..30 {
                    let x = k as f64 * 0.1;
                    let d = fragility_derivs(&t, x);
                    // nonincreasing in α
                    assert!(d.grad[0] <= 0.0);
                    let z = (x - t.alpha.ln()) / t.beta;
                    if z > 0.0 {
                        assert!(d.grad[1] <= 0.0);
                    } else {
                        assert!(d.grad[1] >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn nll_clamps_far_tail() {
        let t = th(1.0, 0.05);
        let b = neg_log_lik(&t, -10.0, true);
        assert!((b.value + 1e-12f64.ln()).abs() < 1e-12);
        assert_eq!(b.grad, Vec2::zero());
        assert!((neg_log_lik_value(&t, -10.0, true) - b.value).abs() < 1e-12);
    }

    #[test]
    fn boundary_detection() {
        let bounds = ParamBounds::<f64>::default();
        assert!(bounds.on_boundary(&th(1.0, 0.05), 1e-6));
        assert!(!bounds.on_boundary(&th(1.0, 0.4), 1e-6));
        assert!(bounds.on_boundary(&th(1e-3, 0.4), 1e-6));
        assert!(ParamBounds::new((1.0, 0.5), (0.1, 1.0)).is_err());
    }
}
