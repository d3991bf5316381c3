//! Benchmark harness: risks, replication metrics, coverage, ellipsoid volumes, the MLE
//! bootstrap, a nonparametric reference curve and the two study cases.

mod bands;
mod bootstrap;
mod reference;
mod study;

use serde::{Deserialize, Serialize};

use crate::dynamics::quantile_type7;
use crate::estimators::LabeledPoint;
use crate::linalg::Mat2;
use crate::model::{quad_loss_value, FragilityParams, RegularizerConfig};
use crate::{Error, Result};

pub use bands::{fragility_band, fragility_ci_from_asymptotics, BandPoint};
pub use bootstrap::{bootstrap_mle_cov, BootstrapCov};
pub use reference::{kmeans_1d, nonparametric_reference, ReferenceCurve};
pub use study::{
    analytic_b, run_pair, run_replication, run_study, simulate_record, CaseSetup, CheckpointRecord, OscillatorCase,
    OscillatorCaseConfig, PairRecord, ReplicationRecord, SignalRecord, StudyPlan, StudyResults, SyntheticCase,
    TEST_SIGNAL_STREAM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Isal,
    Rs,
    Mle,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Isal, Strategy::Rs, Strategy::Mle];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Isal => "isal",
            Strategy::Rs => "rs",
            Strategy::Mle => "mle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Test,
}

/// `Q̂ = (1/nₜ) Σ ℓ_θ(x, s) + β_reg/(nₜβ)` over an i.i.d. test sample (weights ignored).
pub fn test_risk(theta: &FragilityParams<f64>, reg: &RegularizerConfig<f64>, test: &[LabeledPoint<f64>]) -> f64 {
    let n = test.len() as f64;
    let sum: f64 = test.iter().map(|p| quad_loss_value(theta, p.x, p.s)).sum();
    (sum + reg.beta_reg / theta.beta) / n
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance (denominator `R − 1`).
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Relative standard deviation `sd/mean` of replicated risks.
pub fn rsd(risks: &[f64]) -> Result<f64> {
    if risks.len() < 2 {
        return Err(Error::TooFewReplications { needed: 2, got: risks.len() });
    }
    let m = mean(risks);
    if m == 0.0 {
        return Err(Error::ZeroMean);
    }
    Ok(variance(risks).sqrt() / m)
}

/// Relative bias `|b − mean|/b`.
pub fn rb(risks: &[f64], b: f64) -> Result<f64> {
    if risks.is_empty() {
        return Err(Error::TooFewReplications { needed: 1, got: 0 });
    }
    if b == 0.0 {
        return Err(Error::ZeroMean);
    }
    Ok((b - mean(risks)).abs() / b)
}

/// `ν = Var(other)/Var(IS-AL)`.
pub fn efficiency(other: &[f64], isal: &[f64]) -> Result<f64> {
    for v in [other, isal] {
        if v.len() < 2 {
            return Err(Error::TooFewReplications { needed: 2, got: v.len() });
        }
    }
    Ok(variance(other) / variance(isal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: Strategy,
    pub n: usize,
    pub side: Side,
    pub replications: usize,
    pub mean: f64,
    /// NaN when undefined (fewer than two replications).
    pub rsd: f64,
    pub rb: f64,
    pub nu: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    /// One row per (strategy, n, side); `risks(strategy, n, side)` returns the replicated risks.
    pub fn build<F>(ns: &[usize], b: f64, mut risks: F) -> Self
    where
        F: FnMut(Strategy, usize, Side) -> Vec<f64>,
    {
        let mut rows = Vec::new();
        for &n in ns {
            for side in [Side::Train, Side::Test] {
                let isal = risks(Strategy::Isal, n, side);
                for strategy in Strategy::ALL {
                    let r = if strategy == Strategy::Isal { isal.clone() } else { risks(strategy, n, side) };
                    if r.is_empty() {
                        continue;
                    }
                    rows.push(MetricsRow {
                        strategy,
                        n,
                        side,
                        replications: r.len(),
                        mean: mean(&r),
                        rsd: rsd(&r).unwrap_or(f64::NAN),
                        rb: rb(&r, b).unwrap_or(f64::NAN),
                        nu: efficiency(&r, &isal).unwrap_or(f64::NAN),
                        q10: quantile_type7(&r, 0.1).unwrap_or(f64::NAN),
                        q90: quantile_type7(&r, 0.9).unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Self { rows }
    }

    pub fn get(&self, strategy: Strategy, n: usize, side: Side) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.n == n && r.side == side)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub cp: f64,
    /// Binomial standard error `√(cp(1−cp)/R)`.
    pub se: f64,
    pub replications: usize,
}

pub fn coverage_probability(hits: &[bool]) -> Coverage {
    let r = hits.len();
    if r == 0 {
        return Coverage { cp: f64::NAN, se: f64::NAN, replications: 0 };
    }
    let cp = hits.iter().filter(|&&h| h).count() as f64 / r as f64;
    Coverage { cp, se: (cp * (1.0 - cp) / r as f64).sqrt(), replications: r }
}

/// `det(cov/n)`; `None` for a singular or non-finite covariance.
pub fn cev(cov: &Mat2<f64>, n: usize) -> Option<f64> {
    let d = cov.scale(1.0 / n as f64).det();
    (d.is_finite() && d > 0.0 && cov.condition_number() <= crate::inference::MAX_CONDITION).then_some(d)
}

/// Median of the available values, ignoring missing ones.
pub fn median_present(values: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    quantile_type7(&v, 0.5).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definitional_identities() {
        assert_eq!(rsd(&[0.2; 5]).unwrap(), 0.0);
        assert_eq!(rb(&[0.03, 0.034], 0.032).unwrap(), 0.0);
        let r = [0.1, 0.3, 0.2, 0.25];
        assert_eq!(efficiency(&r, &r).unwrap(), 1.0);
        assert_eq!(rsd(&[0.0, 0.0]), Err(Error::ZeroMean));
        assert!(matches!(rsd(&[1.0]), Err(Error::TooFewReplications { .. })));
    }

    #[test]
    fn test_risk_examples() {
        let reg = RegularizerConfig { beta_reg: 0.01 };
        // a steep curve at the step reproduces deterministic labels
        let theta = FragilityParams::new(1.0, 0.05);
        let test: Vec<_> = [-3.0, -2.0, 2.0, 3.0].iter().map(|&x| LabeledPoint { x, s: x > 0.0, w: 1.0 }).collect();
        let q = test_risk(&theta, &reg, &test);
        assert!((q - 0.01 / (4.0 * 0.05)).abs() < 1e-12, "{q}");
        // f ≡ ½ at every point with x = ln α
        let half = FragilityParams::new(1.0, 0.4);
        let test: Vec<_> = [true, false].iter().map(|&s| LabeledPoint { x: 0.0, s, w: 1.0 }).collect();
        assert!((test_risk(&half, &reg, &test) - (0.25 + 0.01 / (2.0 * 0.4))).abs() < 1e-15);
    }

    #[test]
    fn coverage_and_cev() {
        let c = coverage_probability(&[true; 10]);
        assert_eq!((c.cp, c.se), (1.0, 0.0));
        assert_eq!(coverage_probability(&[false; 4]).cp, 0.0);
        let c = coverage_probability(&[true, false, true, true]);
        assert!((c.se - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(cev(&Mat2::identity(), 1), Some(1.0));
        assert!((cev(&Mat2::diag(4.0, 9.0), 100).unwrap() - 3.6e-3).abs() < 1e-15);
        assert_eq!(cev(&Mat2([[1.0, 1.0], [1.0, 1.0]]), 10), None);
        assert_eq!(median_present(&[Some(1.0), None, Some(3.0)]), Some(2.0));
    }

    #[test]
    fn table_rows() {
        let t = MetricsTable::build(&[10], 1.0, |s, _, side| match (s, side) {
            (Strategy::Isal, _) => vec![1.0, 1.2],
            (Strategy::Rs, _) => vec![0.8, 1.6],
            (Strategy::Mle, Side::Train) => vec![],
            (Strategy::Mle, Side::Test) => vec![1.0, 1.0],
        });
        assert_eq!(t.get(Strategy::Isal, 10, Side::Test).unwrap().nu, 1.0);
        assert!((t.get(Strategy::Rs, 10, Side::Test).unwrap().nu - 16.0).abs() < 1e-9);
        assert!(t.get(Strategy::Mle, 10, Side::Train).is_none());
    }
}
