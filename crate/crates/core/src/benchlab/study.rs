use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bootstrap_mle_cov, cev, test_risk, MetricsTable, Side, Strategy};
use crate::dynamics::{
    generate_signal, pga, simulate_linear, simulate_nonlinear, spectral_accel, Accelerogram, Capacity,
    GroundMotionParams, ImKind, OscillatorSpec, SimOptions,
};
use crate::estimators::{
    isal_run, loo_select_beta_reg, minimize_regularized_risk, mle_path, rs_run, FnOracle, IsalConfig, IsalTrajectory,
    LabelOracle, LabeledPoint, PoolLabels, Provenance, RegSelection, RsConfig, WeightedDataset,
};
use crate::inference::{combine_runs, g_hat, w_statistic, ConvergenceVerdict, Ellipsoid};
use crate::linalg::Mat2;
use crate::model::{fragility_pair, fragility_prob, FragilityParams, ParamBounds, RegularizerConfig};
use crate::quadrature;
use crate::sampling::{DrawRecord, MarginalModel};
use crate::{Error, Result};

/// `b = E[μ(X)(1−μ(X))]` for a lognormal curve under a Gaussian log-IM marginal.
pub fn analytic_b(truth: &FragilityParams<f64>, mean: f64, variance: f64) -> f64 {
    let sd = variance.sqrt();
    let f = |x: f64| {
        let z = (x - mean) / sd;
        let (p, q) = fragility_pair(truth, x);
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()) * p * q
    };
    quadrature::integrate(f, mean - 10.0 * sd, mean + 10.0 * sd, 1e-10).value
}

/// Known lognormal curve, Gaussian log-IM marginal, Bernoulli labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCase {
    pub truth: FragilityParams<f64>,
    pub mean: f64,
    pub variance: f64,
    pub test: Vec<LabeledPoint<f64>>,
    pub b: f64,
}

impl SyntheticCase {
    pub fn new(truth: FragilityParams<f64>, mean: f64, variance: f64, test_size: usize, seed: u64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidArgument(format!("marginal variance must be positive, got {variance}")));
        }
        let mut rng = stream_rng(seed, STREAM_TEST);
        let test = (0..test_size)
            .map(|_| {
                let x = Normal::new(mean, variance.sqrt()).expect("positive sd").sample(&mut rng);
                LabeledPoint { x, s: rng.random::<f64>() < fragility_prob(&truth, x), w: 1.0 }
            })
            .collect();
        Ok(Self { truth, mean, variance, test, b: analytic_b(&truth, mean, variance) })
    }

    /// `(α*, β*) = (0.3, 0.4)`, log-IM mean `ln(α*/5)` and variance 1.69.
    pub fn reference(test_size: usize, seed: u64) -> Result<Self> {
        let truth = FragilityParams::new(0.3, 0.4);
        Self::new(truth, (0.3f64 / 5.0).ln(), 1.69, test_size, seed)
    }

    pub fn marginal(&self) -> MarginalModel<f64> {
        MarginalModel::AnalyticGaussian { mean: self.mean, variance: self.variance }
    }

    fn oracle(&self, seed: u64, stream: u64) -> impl LabelOracle<f64> {
        let truth = self.truth;
        let mut rng = stream_rng(seed, stream);
        FnOracle(move |d: &crate::sampling::DrawRecord<f64>| Ok(rng.random::<f64>() < fragility_prob(&truth, d.x)))
    }

    fn init_set(&self, seed: u64, stream: u64, n0: usize) -> WeightedDataset<f64> {
        let mut rng = stream_rng(seed, stream);
        let normal = Normal::new(self.mean, self.variance.sqrt()).expect("positive sd");
        let points = (0..n0)
            .map(|_| {
                let x = normal.sample(&mut rng);
                LabeledPoint { x, s: rng.random::<f64>() < fragility_prob(&self.truth, x), w: 1.0 }
            })
            .collect();
        WeightedDataset::new(points, Provenance::Rs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorCaseConfig {
    pub ground_motion: GroundMotionParams,
    pub oscillator: OscillatorSpec,
    pub capacity: Capacity,
    pub im: ImKind,
    pub pool_size: usize,
    pub test_size: usize,
    pub sim: SimOptions,
    pub seed: u64,
}

impl OscillatorCaseConfig {
    /// 5 Hz / 2% / Y = 5 mm / a = 0.2 oscillator, `C = 2Y`, PGA, 10⁴ + 10⁴ signals.
    pub fn reference(seed: u64) -> Self {
        let oscillator = OscillatorSpec::reference();
        Self {
            ground_motion: GroundMotionParams::default(),
            oscillator,
            capacity: Capacity::Fixed { value: 2.0 * oscillator.yield_disp },
            im: ImKind::Pga,
            pool_size: 10_000,
            test_size: 10_000,
            sim: SimOptions::default(),
            seed,
        }
    }

    /// Regenerates signal `stream` of this configuration.
    pub fn signal(&self, stream: u64) -> Accelerogram {
        generate_signal(&self.ground_motion, &mut stream_rng(self.seed, stream))
    }
}

/// Stream offset of the test signals, far above any pool index.
pub const TEST_SIGNAL_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub stream: u64,
    pub pga: f64,
    /// Pseudo-spectral acceleration at the oscillator's own frequency and damping.
    pub sa: f64,
    pub im: f64,
    pub d_linear: f64,
    pub d_nonlinear: f64,
}

/// Simulated signal pool and test set with all labels precomputed.
#[derive(Debug, Clone)]
pub struct OscillatorCase {
    pub config: OscillatorCaseConfig,
    pub pool: Vec<SignalRecord>,
    pub test_signals: Vec<SignalRecord>,
    pub capacity: f64,
    pub pool_x: Arc<[f64]>,
    pub pool_labels: Arc<[bool]>,
    pub test: Vec<LabeledPoint<f64>>,
    /// Least-squares fit on the whole pool (stand-in for the true parameter).
    pub theta_star: FragilityParams<f64>,
    /// Least-squares fit on the linear-oscillator labels of the pool.
    pub theta0: FragilityParams<f64>,
    /// Pool mean of `f*(1 − f*)`.
    pub b: f64,
}

pub fn simulate_record(cfg: &OscillatorCaseConfig, stream: u64) -> Result<SignalRecord> {
    let acc = cfg.signal(stream);
    let spec = &cfg.oscillator;
    let d_linear = simulate_linear(&acc, spec, &cfg.sim)?.max_displacement;
    let d_nonlinear = simulate_nonlinear(&acc, spec, &cfg.sim)?.max_displacement;
    let sa = spec.stiffness() * d_linear;
    let pga = pga(&acc);
    let im = match cfg.im {
        ImKind::Pga => pga,
        ImKind::Sa { freq, zeta } if freq == spec.freq && zeta == spec.zeta => sa,
        ImKind::Sa { freq, zeta } => spectral_accel(&acc, freq, zeta, &cfg.sim)?,
    };
    Ok(SignalRecord { stream, pga, sa, im, d_linear, d_nonlinear })
}

impl OscillatorCase {
    pub fn build(config: OscillatorCaseConfig, bounds: &ParamBounds<f64>) -> Result<Self> {
        config.oscillator.validate()?;
        if config.pool_size == 0 {
            return Err(Error::EmptyPool);
        }
        let sim = |streams: Vec<u64>| -> Result<Vec<SignalRecord>> {
            streams.into_par_iter().map(|s| simulate_record(&config, s)).collect()
        };
        let pool = sim((0..config.pool_size as u64).collect())?;
        let test_signals = sim((0..config.test_size as u64).map(|i| TEST_SIGNAL_STREAM + i).collect())?;
        Self::from_records(config, pool, test_signals, bounds)
    }

    /// Assembles the case from already simulated records.
    pub fn from_records(
        config: OscillatorCaseConfig,
        pool: Vec<SignalRecord>,
        test_signals: Vec<SignalRecord>,
        bounds: &ParamBounds<f64>,
    ) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        if let Some(r) = pool.iter().chain(&test_signals).find(|r| !(r.im > 0.0)) {
            return Err(Error::InvalidArgument(format!("signal {} has non-positive IM {}", r.stream, r.im)));
        }
        let linear: Vec<f64> = pool.iter().map(|r| r.d_linear).collect();
        let capacity = config.capacity.resolve(&linear)?;
        let pool_x: Arc<[f64]> = pool.iter().map(|r| r.im.ln()).collect();
        let pool_labels: Arc<[bool]> = pool.iter().map(|r| r.d_nonlinear > capacity).collect();
        let linear_labels: Vec<bool> = pool.iter().map(|r| r.d_linear > capacity).collect();
        let test =
            test_signals.iter().map(|r| LabeledPoint { x: r.im.ln(), s: r.d_nonlinear > capacity, w: 1.0 }).collect();
        let mean_x = pool_x.iter().sum::<f64>() / pool_x.len() as f64;
        let start = bounds.clamp(&FragilityParams::new(mean_x.exp(), 0.5));
        let ls = |labels: &[bool]| {
            let d = WeightedDataset::unweighted(&pool_x, labels, Provenance::Rs);
            minimize_regularized_risk(&d, &RegularizerConfig::none(), bounds, &start).map(|f| f.theta_hat)
        };
        let theta_star = ls(&pool_labels)?;
        let theta0 = ls(&linear_labels)?;
        let b = pool_x
            .iter()
            .map(|&x| {
                let (f, sf) = fragility_pair(&theta_star, x);
                f * sf
            })
            .sum::<f64>()
            / pool_x.len() as f64;
        Ok(Self { config, pool, test_signals, capacity, pool_x, pool_labels, test, theta_star, theta0, b })
    }

    pub fn marginal(&self) -> MarginalModel<f64> {
        MarginalModel::PoolEmpirical(self.pool_x.clone())
    }

    pub fn failure_rate(&self) -> f64 {
        self.pool_labels.iter().filter(|&&s| s).count() as f64 / self.pool_labels.len() as f64
    }
}

#[derive(Debug, Clone)]
pub enum CaseSetup {
    Synthetic(SyntheticCase),
    Oscillator(Arc<OscillatorCase>),
}

impl CaseSetup {
    pub fn theta_star(&self) -> FragilityParams<f64> {
        match self {
            CaseSetup::Synthetic(c) => c.truth,
            CaseSetup::Oscillator(c) => c.theta_star,
        }
    }

    pub fn b(&self) -> f64 {
        match self {
            CaseSetup::Synthetic(c) => c.b,
            CaseSetup::Oscillator(c) => c.b,
        }
    }

    pub fn test_set(&self) -> &[LabeledPoint<f64>] {
        match self {
            CaseSetup::Synthetic(c) => &c.test,
            CaseSetup::Oscillator(c) => &c.test,
        }
    }

    pub fn marginal(&self) -> MarginalModel<f64> {
        match self {
            CaseSetup::Synthetic(c) => c.marginal(),
            CaseSetup::Oscillator(c) => c.marginal(),
        }
    }

    fn start(&self, bounds: &ParamBounds<f64>) -> FragilityParams<f64> {
        let mean = match self {
            CaseSetup::Synthetic(c) => c.mean,
            CaseSetup::Oscillator(c) => c.pool_x.iter().sum::<f64>() / c.pool_x.len() as f64,
        };
        bounds.clamp(&FragilityParams::new(mean.exp(), 0.5))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    /// Labelled points per strategy, warm-up included.
    pub n: usize,
    pub n0: usize,
    pub epsilon: f64,
    pub beta_reg_grid: Vec<f64>,
    /// Sizes at which fits and risks are recorded (`n` is always added).
    pub checkpoints: Vec<usize>,
    /// Sizes at which covariance, coverage and volume are computed.
    pub inference_checkpoints: Vec<usize>,
    /// Coverage level of the confidence ellipsoids.
    pub xi: f64,
    /// Bootstrap resamples for the MLE ellipsoid; 0 disables it.
    pub bootstrap: usize,
    pub bounds: ParamBounds<f64>,
    pub replications: usize,
    /// Independent IS-AL pairs for the convergence statistic.
    pub pairs: usize,
    pub w_checkpoints: Vec<usize>,
    /// Test level of the convergence statistic.
    pub w_level: f64,
    pub base_seed: u64,
}

impl StudyPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return bad(format!("xi must lie in (0, 1), got {}", self.xi));
        }
        if !(self.w_level > 0.0 && self.w_level < 1.0) {
            return bad(format!("w_level must lie in (0, 1), got {}", self.w_level));
        }
        if self.n0 == 0 || self.n < self.n0 {
            return bad(format!("need n >= n0 >= 1, got n = {}, n0 = {}", self.n, self.n0));
        }
        if self.beta_reg_grid.is_empty() || self.beta_reg_grid.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return bad("beta_reg grid must be non-empty and non-negative".into());
        }
        for (name, c) in [
            ("checkpoints", &self.checkpoints),
            ("inference_checkpoints", &self.inference_checkpoints),
            ("w_checkpoints", &self.w_checkpoints),
        ] {
            if let Some(k) = c.iter().find(|&&k| k < self.n0 || k > self.n) {
                return bad(format!("{name} entry {k} outside [n0, n] = [{}, {}]", self.n0, self.n));
            }
        }
        Ok(())
    }

    fn all_checkpoints(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self
            .checkpoints
            .iter()
            .chain(&self.inference_checkpoints)
            .chain(&self.w_checkpoints)
            .copied()
            .chain([self.n])
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    fn replication_seed(&self, r: usize) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_ISAL: u64 = 2;
const STREAM_ISAL_LABELS: u64 = 3;
const STREAM_RS: u64 = 4;
const STREAM_RS_LABELS: u64 = 5;
const STREAM_BOOTSTRAP: u64 = 6;
const STREAM_PAIR: u64 = 7;
const STREAM_PAIR_LABELS: u64 = 8;
const STREAM_TEST: u64 = 9;
const STREAM_PAIR_INIT: u64 = 10;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub strategy: Strategy,
    pub n: usize,
    pub theta: FragilityParams<f64>,
    pub train_risk: f64,
    pub test_risk: f64,
    pub boundary: bool,
    /// `Ĝₙ` (IS-AL) or the bootstrap covariance (MLE), before division by `n`.
    pub cov: Option<Mat2<f64>>,
    pub cev: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub beta_reg_isal: f64,
    pub beta_reg_rs: f64,
    pub theta0: FragilityParams<f64>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub max_ratio: f64,
    /// Recorded IS-AL ratios at or above `1/ε`.
    pub ratio_violations: usize,
    pub isal_oracle_calls: usize,
    pub rs_oracle_calls: usize,
    /// Oscillator case: distinct pool signals labelled by IS-AL.
    pub isal_distinct_draws: Option<usize>,
}

impl ReplicationRecord {
    pub fn get(&self, strategy: Strategy, n: usize) -> Option<&CheckpointRecord> {
        self.checkpoints.iter().find(|c| c.strategy == strategy && c.n == n)
    }
}

struct Prepared {
    theta0: FragilityParams<f64>,
    isal_reg: RegSelection<f64>,
    /// Synthetic case: the shared initial sample from `p`, which also serves as the IS-AL warm-up.
    init: Option<WeightedDataset<f64>>,
    rs_reg: RegSelection<f64>,
}

fn prepare(case: &CaseSetup, plan: &StudyPlan, seed: u64, init_stream: u64) -> Result<Prepared> {
    let start = case.start(&plan.bounds);
    match case {
        CaseSetup::Synthetic(c) => {
            let init = c.init_set(seed, init_stream, plan.n0);
            let sel = loo_select_beta_reg(&init, &plan.beta_reg_grid, &plan.bounds, &start)?;
            let theta0 = minimize_regularized_risk(&init, &sel.config, &plan.bounds, &start)?.theta_hat;
            Ok(Prepared {
                theta0,
                isal_reg: RegSelection::Fixed(sel.config),
                init: Some(init),
                rs_reg: RegSelection::Fixed(sel.config),
            })
        }
        CaseSetup::Oscillator(c) => Ok(Prepared {
            theta0: c.theta0,
            isal_reg: RegSelection::LeaveOneOut(plan.beta_reg_grid.clone()),
            init: None,
            rs_reg: RegSelection::LeaveOneOut(plan.beta_reg_grid.clone()),
        }),
    }
}

fn isal_once(
    case: &CaseSetup,
    plan: &StudyPlan,
    prep: &Prepared,
    seed: u64,
    streams: (u64, u64),
) -> Result<IsalTrajectory<f64>> {
    let cfg = IsalConfig {
        n: plan.n,
        n0: plan.n0,
        epsilon: plan.epsilon,
        regularization: prep.isal_reg.clone(),
        bounds: plan.bounds,
        checkpoints: plan.all_checkpoints(),
        preloaded: prep
            .init
            .iter()
            .flat_map(|d| &d.points)
            .map(|p| {
                let d = DrawRecord { index: None, x: p.x, likelihood_ratio: 1.0, theta_at_draw: prep.theta0 };
                (d, p.s)
            })
            .collect(),
    };
    let mut rng = stream_rng(seed, streams.0);
    match case {
        CaseSetup::Synthetic(c) => {
            let mut oracle = c.oracle(seed, streams.1);
            isal_run(&c.marginal(), &mut oracle, &prep.theta0, &cfg, &mut rng)
        }
        CaseSetup::Oscillator(c) => {
            let mut oracle = PoolLabels(c.pool_labels.clone());
            isal_run(&c.marginal(), &mut oracle, &prep.theta0, &cfg, &mut rng)
        }
    }
}

/// One replication of all three strategies with the plan's per-replication seed.
pub fn run_replication(case: &CaseSetup, plan: &StudyPlan, r: usize) -> Result<ReplicationRecord> {
    let seed = plan.replication_seed(r);
    let prep = prepare(case, plan, seed, STREAM_INIT)?;
    let theta_star = case.theta_star();
    let test = case.test_set();
    let checkpoints = plan.all_checkpoints();
    let mut records = Vec::new();

    let traj = isal_once(case, plan, &prep, seed, (STREAM_ISAL, STREAM_ISAL_LABELS))?;
    let cap = 1.0 / plan.epsilon;
    let ratios = traj.draws.iter().map(|d| d.likelihood_ratio);
    let max_ratio = ratios.clone().fold(0.0f64, f64::max);
    let ratio_violations = ratios.filter(|&w| w >= cap).count();
    for fit in &traj.checkpoints {
        let mut rec = CheckpointRecord {
            strategy: Strategy::Isal,
            n: fit.n,
            theta: fit.theta_hat,
            train_risk: fit.risk_value,
            test_risk: test_risk(&fit.theta_hat, &traj.reg, test),
            boundary: fit.boundary,
            cov: None,
            cev: None,
            covered: None,
        };
        if plan.inference_checkpoints.contains(&fit.n) {
            if let Ok(pack) = g_hat(&traj.prefix(fit.n), &fit.theta_hat, plan.epsilon) {
                rec.cov = Some(pack.g_hat);
                rec.cev = cev(&pack.g_hat, fit.n);
                rec.covered = Ellipsoid::from_pack(fit.theta_hat, &pack, plan.xi).ok().map(|e| e.contains(&theta_star));
            }
        }
        records.push(rec);
    }

    let rs_cfg = RsConfig {
        n: plan.n,
        n0: plan.n0,
        regularization: prep.rs_reg.clone(),
        bounds: plan.bounds,
        checkpoints: checkpoints.clone(),
        theta_start: case.start(&plan.bounds),
    };
    let mut rs_rng = stream_rng(seed, STREAM_RS);
    let rs = match case {
        CaseSetup::Synthetic(c) => {
            let mut oracle = c.oracle(seed, STREAM_RS_LABELS);
            rs_run(&c.marginal(), &mut oracle, prep.init.clone(), &rs_cfg, &mut rs_rng)?
        }
        CaseSetup::Oscillator(c) => {
            let mut oracle = PoolLabels(c.pool_labels.clone());
            rs_run(&c.marginal(), &mut oracle, None, &rs_cfg, &mut rs_rng)?
        }
    };
    for fit in &rs.checkpoints {
        records.push(CheckpointRecord {
            strategy: Strategy::Rs,
            n: fit.n,
            theta: fit.theta_hat,
            train_risk: fit.risk_value,
            test_risk: test_risk(&fit.theta_hat, &rs.reg, test),
            boundary: fit.boundary,
            cov: None,
            cev: None,
            covered: None,
        });
    }

    let mle = mle_path(&rs.data, &checkpoints, &plan.bounds, &rs_cfg.theta_start)?;
    let mut boot_rng = stream_rng(seed, STREAM_BOOTSTRAP);
    for fit in &mle {
        let prefix = &rs.data.points[..fit.n];
        let train = crate::estimators::RegularizedRisk { points: prefix, reg: rs.reg, penalty_n: prefix.len() };
        let mut rec = CheckpointRecord {
            strategy: Strategy::Mle,
            n: fit.n,
            theta: fit.theta_hat,
            train_risk: crate::optimize::Objective::value(&train, &fit.theta_hat),
            test_risk: test_risk(&fit.theta_hat, &rs.reg, test),
            boundary: fit.boundary,
            cov: None,
            cev: None,
            covered: None,
        };
        if plan.bootstrap > 0 && plan.inference_checkpoints.contains(&fit.n) {
            if let Ok(boot) = bootstrap_mle_cov(prefix, &fit.theta_hat, plan.bootstrap, &plan.bounds, &mut boot_rng) {
                rec.cov = Some(boot.cov);
                rec.cev = cev(&boot.cov, fit.n);
                rec.covered = boot.ellipsoid(fit.theta_hat, plan.xi).ok().map(|e| e.contains(&theta_star));
            }
        }
        records.push(rec);
    }

    let isal_distinct_draws = match case {
        CaseSetup::Oscillator(_) => Some(traj.oracle_calls),
        CaseSetup::Synthetic(_) => None,
    };
    Ok(ReplicationRecord {
        replication: r,
        seed,
        beta_reg_isal: traj.reg.beta_reg,
        beta_reg_rs: rs.reg.beta_reg,
        theta0: prep.theta0,
        checkpoints: records,
        max_ratio,
        ratio_violations,
        isal_oracle_calls: traj.oracle_calls,
        rs_oracle_calls: rs.oracle_calls,
        isal_distinct_draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair: usize,
    pub seed: u64,
    pub verdicts: Vec<(usize, ConvergenceVerdict)>,
    /// Combined estimate `(θ̂₁+θ̂₂)/2` per checkpoint and whether its ellipsoid covers θ*.
    pub combined: Vec<(usize, FragilityParams<f64>, Option<bool>)>,
}

/// Two independent IS-AL runs with a common `β_reg`, compared through `Ŵₙ` at the plan's
/// convergence checkpoints. The first run is the IS-AL run of replication `pair`.
pub fn run_pair(case: &CaseSetup, plan: &StudyPlan, pair: usize) -> Result<PairRecord> {
    let seed = plan.replication_seed(pair);
    let a = isal_once(case, plan, &prepare(case, plan, seed, STREAM_INIT)?, seed, (STREAM_ISAL, STREAM_ISAL_LABELS))?;
    // Both members of a pair share the regulariser, so their gradients differ only by noise.
    let mut prep_b = prepare(case, plan, seed, STREAM_PAIR_INIT)?;
    prep_b.isal_reg = RegSelection::Fixed(a.reg);
    let b = isal_once(case, plan, &prep_b, seed, (STREAM_PAIR, STREAM_PAIR_LABELS))?;
    let theta_star = case.theta_star();
    let mut verdicts = Vec::new();
    let mut combined = Vec::new();
    let mut ns = plan.w_checkpoints.clone();
    if ns.is_empty() {
        ns.push(plan.n);
    }
    for n in ns {
        let (pa, pb) = (a.prefix(n), b.prefix(n));
        if let Ok(v) = w_statistic(&pa, &pb, plan.epsilon, plan.w_level) {
            verdicts.push((n, v));
        }
        if let Ok(c) = combine_runs(&pa, &pb, plan.epsilon) {
            combined.push((n, c.theta_12, c.ellipsoid(plan.xi).ok().map(|e| e.contains(&theta_star))));
        }
    }
    Ok(PairRecord { pair, seed, verdicts, combined })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub plan: StudyPlan,
    pub theta_star: FragilityParams<f64>,
    pub b: f64,
    pub records: Vec<ReplicationRecord>,
    /// Replications that failed, with the error message.
    pub failures: Vec<(usize, String)>,
    pub pairs: Vec<PairRecord>,
    pub pair_failures: Vec<(usize, String)>,
    pub metrics: MetricsTable,
}

impl StudyResults {
    pub fn risks(&self, strategy: Strategy, n: usize, side: Side) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.get(strategy, n))
            .map(|c| match side {
                Side::Train => c.train_risk,
                Side::Test => c.test_risk,
            })
            .collect()
    }
}

fn over_limit(failed: usize, total: usize) -> bool {
    failed * 10 > total
}

/// Runs all replications and pairs in parallel (in the ambient rayon pool) and aggregates
/// them in replication order, so the result does not depend on the thread count.
pub fn run_study(case: &CaseSetup, plan: &StudyPlan) -> Result<StudyResults> {
    plan.validate()?;
    let outcomes: Vec<Result<ReplicationRecord>> =
        (0..plan.replications).into_par_iter().map(|r| run_replication(case, plan, r)).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if over_limit(failures.len(), plan.replications) {
        return Err(Error::ReplicationsFailed { failed: failures.len(), total: plan.replications });
    }
    let pair_outcomes: Vec<Result<PairRecord>> =
        (0..plan.pairs).into_par_iter().map(|p| run_pair(case, plan, p)).collect();
    let mut pairs = Vec::new();
    let mut pair_failures = Vec::new();
    for (p, o) in pair_outcomes.into_iter().enumerate() {
        match o {
            Ok(rec) => pairs.push(rec),
            Err(e) => pair_failures.push((p, e.to_string())),
        }
    }
    if over_limit(pair_failures.len(), plan.pairs) {
        return Err(Error::ReplicationsFailed { failed: pair_failures.len(), total: plan.pairs });
    }
    let mut results = StudyResults {
        plan: plan.clone(),
        theta_star: case.theta_star(),
        b: case.b(),
        records,
        failures,
        pairs,
        pair_failures,
        metrics: MetricsTable::default(),
    };
    let ns = plan.all_checkpoints();
    let metrics = MetricsTable::build(&ns, results.b, |s, n, side| results.risks(s, n, side));
    results.metrics = metrics;
    Ok(results)
}
