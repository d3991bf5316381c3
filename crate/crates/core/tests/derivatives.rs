use isal_core::estimators::{LabeledPoint, Provenance, RegularizedRisk, WeightedDataset};
use isal_core::model::{fragility_derivs, neg_log_lik, quad_loss, quad_loss_value, regularizer};
use isal_core::optimize::Objective;
use isal_core::{FragilityParams, LossBundle, RegularizerConfig};
use proptest::prelude::*;

fn shift(t: &FragilityParams<f64>, i: usize, d: f64) -> FragilityParams<f64> {
    if i == 0 {
        FragilityParams::new(t.alpha + d, t.beta)
    } else {
        FragilityParams::new(t.alpha, t.beta + d)
    }
}

fn step(t: &FragilityParams<f64>, i: usize) -> f64 {
    1e-4 * if i == 0 { t.alpha } else { t.beta }
}

fn diff<F: Fn(&FragilityParams<f64>) -> f64>(f: F, t: &FragilityParams<f64>, i: usize) -> f64 {
    let h = step(t, i);
    (f(&shift(t, i, h)) - f(&shift(t, i, -h))) / (2.0 * h)
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-300)
}

/// Worst relative error of the bundle's gradient and Hessian against central differences.
fn check<F: Fn(&FragilityParams<f64>) -> LossBundle<f64>>(f: F, t: &FragilityParams<f64>) -> f64 {
    let b = f(t);
    let gs = b.grad[0].abs().max(b.grad[1].abs());
    let hs = (0..4).map(|k| b.hess.get(k / 2, k % 2).abs()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for i in 0..2 {
        worst = worst.max(rel(diff(|u| f(u).value, t, i), b.grad[i], gs));
        for j in 0..2 {
            worst = worst.max(rel(diff(|u| f(u).grad[j], t, i), b.hess.get(j, i), hs));
        }
    }
    worst
}

fn theta() -> impl Strategy<Value = FragilityParams<f64>> {
    (-1.5f64..0.7, 0.1f64..1.5).prop_map(|(la, b)| FragilityParams::new(10f64.powf(la), b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn quadratic_loss_derivatives(t in theta(), z in -4.0f64..4.0, s: bool) {
        let x = t.alpha.ln() + t.beta * z;
        prop_assert!(check(|u| quad_loss(u, x, s), &t) < 1e-5);
        prop_assert_eq!(quad_loss(&t, x, s).value, quad_loss_value(&t, x, s));
    }

    #[test]
    fn log_likelihood_derivatives(t in theta(), z in -4.0f64..4.0, s: bool) {
        let x = t.alpha.ln() + t.beta * z;
        prop_assert!(check(|u| neg_log_lik(u, x, s), &t) < 1e-5);
    }

    #[test]
    fn fragility_derivatives(t in theta(), z in -4.0f64..4.0) {
        let x = t.alpha.ln() + t.beta * z;
        let d = fragility_derivs(&t, x);
        prop_assert!((d.prob + d.survival - 1.0).abs() < 1e-15);
        let g = fragility_derivs(&t, x).grad;
        let scale = g[0].abs().max(g[1].abs());
        for i in 0..2 {
            prop_assert!(rel(diff(|u| fragility_derivs(u, x).prob, &t, i), g[i], scale) < 1e-5);
        }
    }

    #[test]
    fn regulariser_derivatives(t in theta(), lr in -4.0f64..0.0) {
        let reg = RegularizerConfig { beta_reg: 10f64.powf(lr) };
        prop_assert!(check(|u| regularizer(u, &reg), &t) < 1e-5);
    }

    #[test]
    fn weighted_risk_bundle_matches_value(
        t in theta(),
        pts in prop::collection::vec((-5.0f64..1.0, any::<bool>(), 0.1f64..10.0), 2..40),
        penalty_n in 1usize..500,
    ) {
        let points = pts.into_iter().map(|(x, s, w)| LabeledPoint { x, s, w }).collect();
        let data = WeightedDataset::new(points, Provenance::Isal);
        let obj = RegularizedRisk::new(&data, RegularizerConfig { beta_reg: 0.01 }).with_penalty_n(penalty_n);
        let b = obj.bundle(&t);
        prop_assert!(rel(b.value, obj.value(&t), b.value.abs()) < 1e-12);
        prop_assert!(check(|u| obj.bundle(u), &t) < 1e-5);
    }
}
