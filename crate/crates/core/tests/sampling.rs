use std::f64::consts::{PI, SQRT_2};

use isal_core::sampling::{optimal_weight, MarginalModel, MAX_OPTIMAL_WEIGHT};
use isal_core::FragilityParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// `g` written out from the fragility value alone.
fn g_oracle(t: &FragilityParams<f64>, x: f64) -> f64 {
    let f = phi((x - t.alpha.ln()) / t.beta);
    let sf = 1.0 - f;
    (f * sf * (f.powi(3) + sf.powi(3))).sqrt()
}

/// Composite Simpson rule on a fine grid.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn gaussian(x: f64, m: f64, sd: f64) -> f64 {
    (-0.5 * ((x - m) / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt())
}

#[test]
fn optimal_weight_matches_closed_form_and_bound() {
    let t = FragilityParams::new(0.3, 0.4);
    for k in 0..200 {
        let x = -5.0 + 0.025 * k as f64;
        let g = optimal_weight(&t, x);
        assert!((g - g_oracle(&t, x)).abs() < 1e-12);
        assert!(g <= MAX_OPTIMAL_WEIGHT);
    }
    // f(1−f) = 1/6 at the supremum
    let f: f64 = 0.5 + (1.0f64 / 12.0).sqrt();
    let z = {
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) < f {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    };
    assert!((optimal_weight(&t, t.alpha.ln() + t.beta * z) - MAX_OPTIMAL_WEIGHT).abs() < 1e-12);
}

#[test]
fn gaussian_mixture_ratio_matches_quadrature() {
    let (m, var) = ((0.06f64).ln(), 1.69f64);
    let sd = var.sqrt();
    let t = FragilityParams::new(0.3, 0.4);
    let eps = 0.05;
    let z = simpson(|x| gaussian(x, m, sd) * g_oracle(&t, x), m - 10.0 * sd, m + 10.0 * sd);
    let q = MarginalModel::AnalyticGaussian { mean: m, variance: var }.defensive(&t, eps).unwrap();
    for k in 0..100 {
        let x = m - 4.0 * sd + 0.08 * sd * k as f64;
        let expected = 1.0 / (eps + (1.0 - eps) * g_oracle(&t, x) / z);
        let r = q.ratio_at_x(x).unwrap();
        assert!((r - expected).abs() < 1e-6 * expected, "x = {x}: {r} vs {expected}");
    }
    // E_q[p/q] = 1
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ratios: Vec<f64> = (0..40_000).map(|_| q.draw(&mut rng).likelihood_ratio).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let sd_r = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (ratios.len() - 1) as f64).sqrt();
    assert!((mean - 1.0).abs() < 4.0 * sd_r / (ratios.len() as f64).sqrt(), "{mean}");
}

#[test]
fn pool_mixture_probabilities_and_draw_frequencies() {
    let xs: Vec<f64> = (0..50).map(|i| -4.0 + 0.08 * i as f64).collect();
    let t = FragilityParams::new(0.2, 0.5);
    let eps = 0.1;
    let q = MarginalModel::pool(xs.clone()).defensive(&t, eps).unwrap();
    let g: Vec<f64> = xs.iter().map(|&x| g_oracle(&t, x)).collect();
    let total: f64 = g.iter().sum();
    let n = xs.len() as f64;
    let probs = q.weights().unwrap();
    let ratios = q.likelihood_ratios().unwrap();
    for j in 0..xs.len() {
        let qj = eps / n + (1.0 - eps) * g[j] / total;
        assert!((probs[j] - qj).abs() < 1e-14);
        assert!((ratios[j] - 1.0 / (n * qj)).abs() < 1e-10 * ratios[j]);
    }
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws = 100_000;
    let mut counts = vec![0usize; xs.len()];
    for _ in 0..draws {
        let d = q.draw(&mut rng);
        let i = d.index.unwrap();
        assert_eq!(d.likelihood_ratio, ratios[i]);
        counts[i] += 1;
    }
    for j in 0..xs.len() {
        let p = probs[j];
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((counts[j] as f64 / draws as f64 - p).abs() < 5.0 * se + 1e-4, "point {j}");
    }
}

proptest! {
    #[test]
    fn ratios_stay_below_the_defensive_bound(
        la in -2.0f64..1.0, beta in 0.05f64..2.0, leps in -4.0f64..-0.1, x in -30.0f64..30.0
    ) {
        let t = FragilityParams::new(10f64.powf(la), beta);
        let eps = 10f64.powf(leps);
        let q = MarginalModel::AnalyticGaussian { mean: -2.8, variance: 1.69 }.defensive(&t, eps).unwrap();
        let r = q.ratio_at_x(x).unwrap();
        prop_assert!(r > 0.0 && r < 1.0 / eps);

        let xs: Vec<f64> = (0..40).map(|i| x - 20.0 + i as f64).collect();
        let pool = MarginalModel::pool(xs).defensive(&t, eps).unwrap();
        for &r in pool.likelihood_ratios().unwrap() {
            prop_assert!(r > 0.0 && r < 1.0 / eps);
        }
    }

    #[test]
    fn invalid_mixing_weights_are_rejected(eps in prop_oneof![-1.0f64..=0.0, 1.0001f64..5.0]) {
        let t = FragilityParams::new(0.3, 0.4);
        let p = MarginalModel::AnalyticGaussian { mean: 0.0, variance: 1.0 };
        prop_assert!(p.defensive(&t, eps).is_err());
    }
}
