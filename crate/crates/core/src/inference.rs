//! Asymptotic inference for IS-AL: plug-in covariance, confidence ellipsoids, and the
//! two-run convergence statistic.

use serde::{Deserialize, Serialize};

use crate::estimators::{IsalTrajectory, LabeledPoint, RegularizedRisk};
use crate::linalg::{Mat2, Vec2};
use crate::model::{fragility_derivs, quad_loss, FragilityParams, LossBundle};
use crate::optimize::Objective;
use crate::scalar::{count, lit, to_f64, Scalar};
use crate::{Error, Result};

/// Above this condition number the plug-in Hessian is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariancePack<S> {
    pub r_ddot_hat: Mat2<S>,
    pub v_hat: Mat2<S>,
    pub g_hat: Mat2<S>,
    pub n: usize,
}

impl<S: Scalar> CovariancePack<S> {
    /// `Ĝ = r̈⁻¹ V (r̈⁻¹)ᵀ`.
    pub fn from_parts(r_ddot_hat: Mat2<S>, v_hat: Mat2<S>, n: usize) -> Result<Self> {
        let inv = checked_inverse(&r_ddot_hat)?;
        let g_hat = (inv * v_hat * inv.transpose()).symmetrize();
        Ok(Self { r_ddot_hat, v_hat, g_hat, n })
    }

    /// `Ĝ/n`, the covariance of θ̂.
    pub fn shape(&self) -> Mat2<S> {
        self.g_hat.scale(S::one() / count(self.n))
    }

    pub fn cev(&self) -> S {
        self.shape().det()
    }
}

fn checked_inverse<S: Scalar>(m: &Mat2<S>) -> Result<Mat2<S>> {
    let cond = to_f64(m.condition_number());
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularHessian { condition: cond });
    }
    m.inverse().ok_or(Error::SingularHessian { condition: f64::INFINITY })
}

/// `(1/n) Σ wᵢ ℓ̈_θ(xᵢ, sᵢ)`.
pub fn weighted_hessian<S: Scalar>(points: &[LabeledPoint<S>], theta: &FragilityParams<S>) -> Result<Mat2<S>> {
    // A single observation cannot identify two parameters.
    if points.len() < 2 {
        return Err(Error::SingularHessian { condition: f64::INFINITY });
    }
    let mut acc = LossBundle::zero();
    for p in points {
        acc.accumulate(&quad_loss(theta, p.x, p.s), p.w);
    }
    let h = acc.hess.scale(S::one() / count(points.len())).symmetrize();
    checked_inverse(&h)?;
    Ok(h)
}

/// `(1/n) Σ wᵢ ℓ̇_θ ℓ̇_θᵀ` with per-point weights supplied separately.
pub fn weighted_score_outer<S: Scalar>(
    points: &[LabeledPoint<S>],
    weights: &[S],
    theta: &FragilityParams<S>,
) -> Mat2<S> {
    assert_eq!(points.len(), weights.len());
    let mut v = Mat2::zero();
    for (p, &w) in points.iter().zip(weights) {
        let g = quad_loss(theta, p.x, p.s).grad;
        v += g.outer(&g).scale(w);
    }
    v.scale(S::one() / count(points.len().max(1))).symmetrize()
}

fn run_points<S: Scalar>(traj: &IsalTrajectory<S>) -> Vec<LabeledPoint<S>> {
    traj.dataset(traj.n()).points
}

/// Plug-in estimate of `r̈(θ)` from the frozen draw-time ratios.
pub fn hessian_plug_in<S: Scalar>(traj: &IsalTrajectory<S>, theta: &FragilityParams<S>) -> Result<Mat2<S>> {
    if traj.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    weighted_hessian(&run_points(traj), theta)
}

/// Plug-in estimate of `V(q_{θ,ε}, ℓ̇_θ)`. Each term carries the draw-time ratio times the
/// ratio of `q_{θ,ε}` itself at the draw.
pub fn score_outer_plug_in<S: Scalar>(
    traj: &IsalTrajectory<S>,
    theta: &FragilityParams<S>,
    epsilon: S,
) -> Result<Mat2<S>> {
    if traj.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let q = traj.marginal.defensive(theta, epsilon)?;
    let weights: Vec<S> = traj.draws.iter().map(|d| d.likelihood_ratio * q.ratio_for(d)).collect();
    Ok(weighted_score_outer(&run_points(traj), &weights, theta))
}

pub fn g_hat<S: Scalar>(traj: &IsalTrajectory<S>, theta: &FragilityParams<S>, epsilon: S) -> Result<CovariancePack<S>> {
    let r = hessian_plug_in(traj, theta)?;
    let v = score_outer_plug_in(traj, theta, epsilon)?;
    CovariancePack::from_parts(r, v, traj.n())
}

/// Final estimate of a run: θ̂ after its last draw.
pub fn run_estimate<S: Scalar>(traj: &IsalTrajectory<S>) -> FragilityParams<S> {
    *traj.thetas.last().expect("trajectory holds θ̂₀")
}

/// Quantile of χ²(dof); only `dof = 2` has a closed form here.
pub fn chi2_quantile(dof: u32, prob: f64) -> Result<f64> {
    if dof != 2 {
        return Err(Error::InvalidArgument(format!("chi-square quantile only for 2 dof, got {dof}")));
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(prob));
    }
    Ok(-2.0 * (-prob).ln_1p())
}

pub fn chi2_cdf(dof: u32, x: f64) -> Result<f64> {
    if dof != 2 {
        return Err(Error::InvalidArgument(format!("chi-square cdf only for 2 dof, got {dof}")));
    }
    if x.is_nan() {
        return Err(Error::Domain(x));
    }
    Ok(if x <= 0.0 { 0.0 } else { -(-x / 2.0).exp_m1() })
}

/// `{θ : (θ−c)ᵀ shape⁻¹ (θ−c) < q_xi}` with `q_xi` the `xi`-quantile of χ²(2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid<S> {
    pub center: FragilityParams<S>,
    pub shape: Mat2<S>,
    /// Coverage level.
    pub xi: f64,
    pub chi2_threshold: f64,
    shape_inv: Mat2<S>,
}

impl<S: Scalar> Ellipsoid<S> {
    pub fn new(center: FragilityParams<S>, shape: Mat2<S>, xi: f64) -> Result<Self> {
        let shape_inv = checked_inverse(&shape)?;
        Ok(Self { center, shape, xi, chi2_threshold: chi2_quantile(2, xi)?, shape_inv })
    }

    pub fn from_pack(center: FragilityParams<S>, pack: &CovariancePack<S>, xi: f64) -> Result<Self> {
        Self::new(center, pack.shape(), xi)
    }

    pub fn quad_form(&self, theta: &FragilityParams<S>) -> S {
        self.shape_inv.quad_form(&(theta.as_vec() - self.center.as_vec()))
    }

    pub fn contains(&self, theta: &FragilityParams<S>) -> bool {
        to_f64(self.quad_form(theta)) < self.chi2_threshold
    }

    /// `det(shape)`, the confidence-ellipsoid volume criterion (no π factor).
    pub fn volume(&self) -> S {
        self.shape.det()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub w_n: f64,
    pub threshold: f64,
    pub reject: bool,
}

fn check_pair<S: Scalar>(run1: &IsalTrajectory<S>, run2: &IsalTrajectory<S>) -> Result<()> {
    if run1.n() != run2.n() {
        return Err(Error::InvalidArgument(format!("runs differ in size: {} vs {}", run1.n(), run2.n())));
    }
    if run1.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// `Ŵₙ = (n/8)·Δᵀ V̂₁₂⁻¹ Δ` with `Δ = ∇R̂₁(θ̂₂) − ∇R̂₂(θ̂₁)`; rejects convergence when
/// `Ŵₙ` exceeds the `(1−xi)`-quantile of χ²(2).
pub fn w_statistic<S: Scalar>(
    run1: &IsalTrajectory<S>,
    run2: &IsalTrajectory<S>,
    epsilon: S,
    xi: f64,
) -> Result<ConvergenceVerdict> {
    check_pair(run1, run2)?;
    let (t1, t2) = (run_estimate(run1), run_estimate(run2));
    let (d1, d2) = (run1.dataset(run1.n()), run2.dataset(run2.n()));
    let g12 = RegularizedRisk::new(&d1, run1.reg).bundle(&t2).grad;
    let g21 = RegularizedRisk::new(&d2, run2.reg).bundle(&t1).grad;
    let delta = g12 - g21;
    let v12 = (score_outer_plug_in(run1, &t1, epsilon)? + score_outer_plug_in(run2, &t2, epsilon)?).scale(lit(0.5));
    let v_inv = checked_inverse(&v12)?;
    let w_n = to_f64(v_inv.quad_form(&delta)) * run1.n() as f64 / 8.0;
    let threshold = chi2_quantile(2, 1.0 - xi)?;
    Ok(ConvergenceVerdict { w_n, threshold, reject: w_n > threshold })
}

/// Average of two independent runs and its covariance pack (scaled by `2n`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedEstimate<S> {
    pub theta_12: FragilityParams<S>,
    pub pack_12: CovariancePack<S>,
}

impl<S: Scalar> CombinedEstimate<S> {
    pub fn ellipsoid(&self, xi: f64) -> Result<Ellipsoid<S>> {
        Ellipsoid::from_pack(self.theta_12, &self.pack_12, xi)
    }
}

pub fn combine_runs<S: Scalar>(
    run1: &IsalTrajectory<S>,
    run2: &IsalTrajectory<S>,
    epsilon: S,
) -> Result<CombinedEstimate<S>> {
    check_pair(run1, run2)?;
    let (t1, t2) = (run_estimate(run1), run_estimate(run2));
    let r12 = (hessian_plug_in(run1, &t1)? + hessian_plug_in(run2, &t2)?).scale(lit(0.5));
    let v12 = (score_outer_plug_in(run1, &t1, epsilon)? + score_outer_plug_in(run2, &t2, epsilon)?).scale(lit(0.5));
    let pack_12 = CovariancePack::from_parts(r12, v12, 2 * run1.n())?;
    Ok(CombinedEstimate { theta_12: t1.midpoint(&t2), pack_12 })
}

/// Inverse observed Fisher information per observation for the Bernoulli–lognormal
/// likelihood: `[(1/n) Σ ḟḟᵀ/(f(1−f))]⁻¹`. Divide by `n` for the MLE covariance.
pub fn mle_information_inverse<S: Scalar>(points: &[LabeledPoint<S>], theta: &FragilityParams<S>) -> Result<Mat2<S>> {
    if points.len() < 2 {
        return Err(Error::SingularHessian { condition: f64::INFINITY });
    }
    let floor = lit::<S>(1e-300);
    let mut info = Mat2::zero();
    for p in points {
        let d = fragility_derivs(theta, p.x);
        let var = (d.prob * d.survival).max(floor);
        info += d.grad.outer(&d.grad).scale(S::one() / var);
    }
    checked_inverse(&info.scale(S::one() / count(points.len())).symmetrize())
}

/// Quadratic form helper for callers holding a raw shape matrix.
pub fn mahalanobis<S: Scalar>(shape: &Mat2<S>, d: &Vec2<S>) -> Result<S> {
    Ok(checked_inverse(shape)?.quad_form(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_closed_form() {
        assert!((chi2_quantile(2, 0.9).unwrap() - 4.605170186).abs() < 1e-9);
        assert!(chi2_quantile(2, 1e-300).unwrap() < 1e-299);
        for p in [0.5, 0.9, 0.99] {
            let q = chi2_quantile(2, p).unwrap();
            assert!((chi2_cdf(2, q).unwrap() - p).abs() < 1e-12);
        }
        assert!(matches!(chi2_quantile(2, 1.0), Err(Error::Domain(_))));
        assert!(matches!(chi2_quantile(2, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn identity_pack() {
        let p = CovariancePack::<f64>::from_parts(Mat2::identity(), Mat2::identity(), 1).unwrap();
        assert_eq!(p.g_hat, Mat2::identity());
    }

    #[test]
    fn ellipsoid_boundary() {
        let c = FragilityParams::new(0.0, 0.0);
        let e = Ellipsoid::new(c, Mat2::<f64>::identity(), 0.9).unwrap();
        assert!(e.contains(&c));
        assert!(e.contains(&FragilityParams::new(4.6051f64.sqrt(), 0.0)));
        assert!(!e.contains(&FragilityParams::new(4.6052f64.sqrt(), 0.0)));
    }

    #[test]
    fn cev_arithmetic() {
        let p = CovariancePack::<f64>::from_parts(Mat2::identity(), Mat2::diag(4.0, 9.0), 100).unwrap();
        assert!((p.cev() - 3.6e-3).abs() < 1e-15);
    }

    #[test]
    fn singular_detected() {
        let m = Mat2([[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(
            CovariancePack::<f64>::from_parts(m, Mat2::identity(), 1),
            Err(Error::SingularHessian { .. })
        ));
        let one = [LabeledPoint { x: 0.0, s: true, w: 1.0 }];
        assert!(matches!(weighted_hessian(&one, &FragilityParams::new(1.0, 0.5)), Err(Error::SingularHessian { .. })));
    }

    #[test]
    fn scaling_law() {
        let r = Mat2([[2.0, 0.3], [0.3, 1.0]]);
        let v = Mat2([[1.0, 0.2], [0.2, 0.5]]);
        let c = 3.0;
        let a = CovariancePack::from_parts(r, v, 1).unwrap().g_hat;
        let b = CovariancePack::from_parts(r.scale(c), v.scale(c), 1).unwrap().g_hat;
        assert!((b - a.scale(1.0 / c)).frobenius() < 1e-14);
    }
}
