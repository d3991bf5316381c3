use isal_core::estimators::{
    minimize_regularized_risk, mle_fit, LabeledPoint, NegLogLikelihood, Provenance, RegularizedRisk, WeightedDataset,
};
use isal_core::model::fragility_prob;
use isal_core::optimize::Objective;
use isal_core::{FragilityParams, ParamBounds, RegularizerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GRID: usize = 150;

fn dataset(rng: &mut ChaCha8Rng, weighted: bool) -> WeightedDataset<f64> {
    let truth = FragilityParams::new(10f64.powf(rng.random_range(-1.5..0.5)), rng.random_range(0.2..0.8));
    let n = rng.random_range(20..=150);
    let mean = truth.alpha.ln() + rng.random_range(-1.5..0.5);
    let points = (0..n)
        .map(|_| {
            let x = mean + 1.3 * rng.sample::<f64, _>(StandardNormal);
            let s = rng.random::<f64>() < fragility_prob(&truth, x);
            let w = if weighted { 10f64.powf(rng.random_range(-1.0..1.0)) } else { 1.0 };
            LabeledPoint { x, s, w }
        })
        .collect();
    WeightedDataset::new(points, Provenance::Isal)
}

/// Minimum over a log-α × β grid spanning the bounds.
fn grid_min<O: Objective<f64>>(obj: &O, bounds: &ParamBounds<f64>) -> f64 {
    let (la, lb) = (bounds.alpha.0.ln(), bounds.alpha.1.ln());
    let mut best = f64::INFINITY;
    for i in 0..GRID {
        let alpha = (la + (lb - la) * i as f64 / (GRID - 1) as f64).exp();
        for j in 0..GRID {
            let beta = bounds.beta.0 + (bounds.beta.1 - bounds.beta.0) * j as f64 / (GRID - 1) as f64;
            best = best.min(obj.value(&FragilityParams::new(alpha, beta)));
        }
    }
    best
}

#[test]
fn regularised_fit_beats_grid_scan() {
    let bounds = ParamBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for k in 0..8 {
        let data = dataset(&mut rng, k % 2 == 1);
        let reg = RegularizerConfig { beta_reg: 1e-3 };
        let fit = minimize_regularized_risk(&data, &reg, &bounds, &FragilityParams::new(1.0, 0.5)).unwrap();
        let grid = grid_min(&RegularizedRisk::new(&data, reg), &bounds);
        assert!(fit.risk_value <= grid + 1e-9, "dataset {k}: {} vs grid {grid}", fit.risk_value);
        assert!(bounds.contains(&fit.theta_hat));
    }
}

#[test]
fn likelihood_fit_beats_grid_scan() {
    let bounds = ParamBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for k in 0..6 {
        let data = dataset(&mut rng, false);
        let fit = mle_fit(&data, &bounds, &FragilityParams::new(1.0, 0.5)).unwrap();
        let grid = grid_min(&NegLogLikelihood { points: &data.points }, &bounds);
        assert!(fit.risk_value <= grid + 1e-9, "dataset {k}: {} vs grid {grid}", fit.risk_value);
    }
}

#[test]
fn single_label_runs_to_the_boundary() {
    let bounds = ParamBounds::default();
    let xs = [-3.0, -2.5, -2.0, -1.0];
    let none = WeightedDataset::unweighted(&xs, &[false; 4], Provenance::Rs);
    let fit =
        minimize_regularized_risk(&none, &RegularizerConfig::none(), &bounds, &FragilityParams::new(0.3, 0.4)).unwrap();
    assert!(fit.boundary);
    assert_eq!(fit.theta_hat.alpha, bounds.alpha.1);
}

#[test]
fn single_precision_path_agrees() {
    let bounds = ParamBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let data = dataset(&mut rng, false);
    let reg = RegularizerConfig { beta_reg: 1e-3 };
    let fit = minimize_regularized_risk(&data, &reg, &bounds, &FragilityParams::new(1.0, 0.5)).unwrap();
    let pts32: Vec<LabeledPoint<f32>> =
        data.points.iter().map(|p| LabeledPoint { x: p.x as f32, s: p.s, w: p.w as f32 }).collect();
    let data32 = WeightedDataset::new(pts32, Provenance::Isal);
    let b32 = ParamBounds { alpha: (1e-3f32, 1e2), beta: (0.05, 2.0) };
    let fit32 = minimize_regularized_risk(
        &data32,
        &RegularizerConfig { beta_reg: 1e-3f32 },
        &b32,
        &FragilityParams::new(1.0, 0.5),
    )
    .unwrap();
    assert!((fit32.risk_value as f64 - fit.risk_value).abs() < 1e-4 * fit.risk_value.max(1e-3));
}
