//! IS-AL, random-sampling and maximum-likelihood estimation of θ.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    neg_log_lik, neg_log_lik_value, quad_loss, quad_loss_value, regularizer, FragilityParams, LossBundle, ParamBounds,
    RegularizerConfig,
};
use crate::optimize::{self, MinimizerOptions, Objective};
use crate::sampling::{DrawRecord, MarginalModel};
use crate::scalar::{count, lit, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Isal,
    Rs,
    Mle,
}

/// `(x, s, w)`: log-IM, failure label, importance weight `p/q` frozen at draw time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint<S> {
    pub x: S,
    pub s: bool,
    pub w: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDataset<S> {
    pub points: Vec<LabeledPoint<S>>,
    pub provenance: Provenance,
}

impl<S: Scalar> WeightedDataset<S> {
    pub fn new(points: Vec<LabeledPoint<S>>, provenance: Provenance) -> Self {
        Self { points, provenance }
    }

    /// Unit-weight dataset.
    pub fn unweighted(xs: &[S], labels: &[bool], provenance: Provenance) -> Self {
        let points = xs.iter().zip(labels).map(|(&x, &s)| LabeledPoint { x, s, w: S::one() }).collect();
        Self { points, provenance }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn single_label(&self) -> bool {
        self.points.windows(2).all(|w| w[0].s == w[1].s)
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.s).count()
    }

    pub fn prefix(&self, n: usize) -> Self {
        Self { points: self.points[..n].to_vec(), provenance: self.provenance }
    }
}

/// `R̂_reg(θ) = (1/i) Σ wⱼ ℓ_θ(xⱼ, sⱼ) + β_reg/(nβ)`.
///
/// `i` is the number of points and `n` the penalty size, which equals `i` except inside an
/// active-learning run, where it is the run's final size. With unit weights this is the
/// random-sampling risk; the arithmetic path is the same.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedRisk<'a, S> {
    pub points: &'a [LabeledPoint<S>],
    pub reg: RegularizerConfig<S>,
    pub penalty_n: usize,
}

impl<'a, S: Scalar> RegularizedRisk<'a, S> {
    pub fn new(data: &'a WeightedDataset<S>, reg: RegularizerConfig<S>) -> Self {
        Self { points: &data.points, reg, penalty_n: data.len() }
    }

    pub fn with_penalty_n(mut self, n: usize) -> Self {
        self.penalty_n = n;
        self
    }
}

impl<S: Scalar> Objective<S> for RegularizedRisk<'_, S> {
    fn value(&self, theta: &FragilityParams<S>) -> S {
        let sum: S = self.points.iter().map(|p| p.w * quad_loss_value(theta, p.x, p.s)).sum();
        sum / count::<S>(self.points.len()) + self.reg.beta_reg / theta.beta / count::<S>(self.penalty_n)
    }

    fn bundle(&self, theta: &FragilityParams<S>) -> LossBundle<S> {
        let mut acc = LossBundle::zero();
        for p in self.points {
            acc.accumulate(&quad_loss(theta, p.x, p.s), p.w);
        }
        let mut acc = acc.scaled(S::one() / count(self.points.len()));
        acc.accumulate(&regularizer(theta, &self.reg), S::one() / count(self.penalty_n));
        acc
    }
}

/// Mean negative Bernoulli log-likelihood (unit weights; weights are ignored).
#[derive(Debug, Clone, Copy)]
pub struct NegLogLikelihood<'a, S> {
    pub points: &'a [LabeledPoint<S>],
}

impl<S: Scalar> Objective<S> for NegLogLikelihood<'_, S> {
    fn value(&self, theta: &FragilityParams<S>) -> S {
        let sum: S = self.points.iter().map(|p| neg_log_lik_value(theta, p.x, p.s)).sum();
        sum / count(self.points.len())
    }

    fn bundle(&self, theta: &FragilityParams<S>) -> LossBundle<S> {
        let mut acc = LossBundle::zero();
        for p in self.points {
            acc.accumulate(&neg_log_lik(theta, p.x, p.s), S::one());
        }
        acc.scaled(S::one() / count(self.points.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult<S> {
    pub theta_hat: FragilityParams<S>,
    /// Objective at `theta_hat`: the regularised risk, or the mean negative log-likelihood for MLE.
    pub risk_value: S,
    pub n: usize,
    pub converged: bool,
    /// θ̂ within `1e-6·range` of ∂Θ (α on a log scale).
    pub boundary: bool,
}

fn label_if_single<S: Scalar>(data: &WeightedDataset<S>) -> Option<bool> {
    data.single_label().then(|| data.points[0].s)
}

pub(crate) const BOUNDARY_REL: f64 = 1e-6;

fn fit_with<S: Scalar, O: Objective<S>>(
    obj: &O,
    n: usize,
    bounds: &ParamBounds<S>,
    init: &FragilityParams<S>,
    extra_starts: usize,
    single_label: Option<bool>,
) -> FitResult<S> {
    let opts = MinimizerOptions { extra_starts, ..MinimizerOptions::new(*bounds) };
    let mut m = optimize::minimize(obj, init, &opts);
    if let Some(s) = single_label {
        // The infimum sits at the corner where the curve is flat at the observed label; the
        // interior plateau is only a floating-point artefact, so ties go to the corner.
        let alpha = if s { bounds.alpha.0 } else { bounds.alpha.1 };
        let corner = optimize::polish(obj, &FragilityParams::new(alpha, bounds.beta.0), bounds, 60);
        if corner.value <= m.value {
            m = corner;
        }
    }
    FitResult {
        theta_hat: m.theta,
        risk_value: m.value,
        n,
        converged: m.converged,
        boundary: bounds.on_boundary(&m.theta, lit(BOUNDARY_REL)),
    }
}

/// Minimises the (weighted) regularised quadratic risk over Θ with the multistart minimiser.
///
/// Data carrying a single label is not an error: the fit runs to the boundary and is flagged.
pub fn minimize_regularized_risk<S: Scalar>(
    data: &WeightedDataset<S>,
    cfg: &RegularizerConfig<S>,
    bounds: &ParamBounds<S>,
    init: &FragilityParams<S>,
) -> Result<FitResult<S>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    minimize_regularized_risk_n(data, cfg, data.len(), bounds, init)
}

/// [`minimize_regularized_risk`] with the penalty divided by `penalty_n` instead of the size.
pub fn minimize_regularized_risk_n<S: Scalar>(
    data: &WeightedDataset<S>,
    cfg: &RegularizerConfig<S>,
    penalty_n: usize,
    bounds: &ParamBounds<S>,
    init: &FragilityParams<S>,
) -> Result<FitResult<S>> {
    if data.is_empty() || penalty_n == 0 {
        return Err(Error::EmptyDataset);
    }
    let obj = RegularizedRisk::new(data, *cfg).with_penalty_n(penalty_n);
    Ok(fit_with(&obj, data.len(), bounds, init, 4, label_if_single(data)))
}

/// Local refit from a warm start (projected Newton only).
pub fn refit_regularized_risk<S: Scalar>(
    data: &WeightedDataset<S>,
    cfg: &RegularizerConfig<S>,
    bounds: &ParamBounds<S>,
    start: &FragilityParams<S>,
) -> Result<FitResult<S>> {
    refit_regularized_risk_n(data, cfg, data.len(), bounds, start)
}

fn refit_regularized_risk_n<S: Scalar>(
    data: &WeightedDataset<S>,
    cfg: &RegularizerConfig<S>,
    penalty_n: usize,
    bounds: &ParamBounds<S>,
    start: &FragilityParams<S>,
) -> Result<FitResult<S>> {
    if data.is_empty() || penalty_n == 0 {
        return Err(Error::EmptyDataset);
    }
    let obj = RegularizedRisk::new(data, *cfg).with_penalty_n(penalty_n);
    let m = optimize::polish(&obj, start, bounds, 60);
    Ok(FitResult {
        theta_hat: m.theta,
        risk_value: m.value,
        n: data.len(),
        converged: m.converged,
        boundary: bounds.on_boundary(&m.theta, lit(BOUNDARY_REL)),
    })
}

/// Maximum-likelihood fit of the lognormal model (no penalty).
pub fn mle_fit<S: Scalar>(
    data: &WeightedDataset<S>,
    bounds: &ParamBounds<S>,
    init: &FragilityParams<S>,
) -> Result<FitResult<S>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(fit_with(&NegLogLikelihood { points: &data.points }, data.len(), bounds, init, 4, label_if_single(data)))
}

/// MLE refit from a warm start, used for bootstrap resamples.
pub fn mle_refit<S: Scalar>(
    data: &WeightedDataset<S>,
    bounds: &ParamBounds<S>,
    start: &FragilityParams<S>,
) -> Result<FitResult<S>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let obj = NegLogLikelihood { points: &data.points };
    let m = optimize::polish(&obj, start, bounds, 80);
    Ok(FitResult {
        theta_hat: m.theta,
        risk_value: m.value,
        n: data.len(),
        converged: m.converged,
        boundary: bounds.on_boundary(&m.theta, lit(BOUNDARY_REL)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooSelection<S> {
    pub config: RegularizerConfig<S>,
    /// Mean held-out loss per grid value (NaN when not computed).
    pub scores: Vec<S>,
    /// Set when the data carried no information and the grid midpoint was returned.
    pub degenerate: bool,
}

/// Leave-one-out choice of `β_reg` over `grid`: the value minimising the mean held-out
/// weighted quadratic loss, ties going to the smallest candidate.
pub fn loo_select_beta_reg<S: Scalar>(
    init_set: &WeightedDataset<S>,
    grid: &[S],
    bounds: &ParamBounds<S>,
    start: &FragilityParams<S>,
) -> Result<LooSelection<S>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty beta_reg grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    if sorted.len() == 1 {
        return Ok(LooSelection {
            config: RegularizerConfig { beta_reg: sorted[0] },
            scores: vec![S::nan()],
            degenerate: false,
        });
    }
    if init_set.len() < 3 {
        return Err(Error::InvalidArgument("leave-one-out needs at least 3 points".into()));
    }
    let midpoint = RegularizerConfig { beta_reg: sorted[(sorted.len() - 1) / 2] };
    if init_set.single_label() {
        return Ok(LooSelection { config: midpoint, scores: vec![S::nan(); sorted.len()], degenerate: true });
    }
    let n = init_set.len();
    let mut scores = Vec::with_capacity(sorted.len());
    let mut all_boundary = true;
    for &beta_reg in &sorted {
        let reg = RegularizerConfig { beta_reg };
        let full = minimize_regularized_risk(init_set, &reg, bounds, start)?;
        let mut held_out = S::zero();
        let mut rest = Vec::with_capacity(n - 1);
        for j in 0..n {
            rest.clear();
            rest.extend(init_set.points.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, p)| *p));
            let obj = RegularizedRisk { points: &rest, reg, penalty_n: rest.len() };
            // The risk is multimodal at this size, so each held-out fit gets the full multistart.
            let single = rest.iter().all(|p| p.s == rest[0].s).then(|| rest[0].s);
            let fit = fit_with(&obj, n - 1, bounds, &full.theta_hat, 4, single);
            all_boundary &= fit.boundary;
            let p = init_set.points[j];
            held_out = held_out + p.w * quad_loss_value(&fit.theta_hat, p.x, p.s);
        }
        scores.push(held_out / count(n));
    }
    if all_boundary {
        return Ok(LooSelection { config: midpoint, scores, degenerate: true });
    }
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = k;
        }
    }
    Ok(LooSelection { config: RegularizerConfig { beta_reg: sorted[best] }, scores, degenerate: false })
}

/// Source of failure labels (the expensive mechanical simulation).
pub trait LabelOracle<S> {
    fn label(&mut self, draw: &DrawRecord<S>) -> std::result::Result<bool, String>;
}

impl<S, O: LabelOracle<S> + ?Sized> LabelOracle<S> for &mut O {
    fn label(&mut self, draw: &DrawRecord<S>) -> std::result::Result<bool, String> {
        (**self).label(draw)
    }
}

/// Adapts a closure into an oracle.
pub struct FnOracle<F>(pub F);

impl<S, F: FnMut(&DrawRecord<S>) -> std::result::Result<bool, String>> LabelOracle<S> for FnOracle<F> {
    fn label(&mut self, draw: &DrawRecord<S>) -> std::result::Result<bool, String> {
        (self.0)(draw)
    }
}

/// Labels precomputed for every pool point.
#[derive(Debug, Clone)]
pub struct PoolLabels<L>(pub L);

impl<S, L: AsRef<[bool]>> LabelOracle<S> for PoolLabels<L> {
    fn label(&mut self, draw: &DrawRecord<S>) -> std::result::Result<bool, String> {
        let labels = self.0.as_ref();
        let i = draw.index.ok_or("pool labels need a pool draw")?;
        labels.get(i).copied().ok_or_else(|| format!("index {i} outside pool of {}", labels.len()))
    }
}

/// Memoises pool labels so a re-drawn signal costs no new simulation.
#[derive(Debug)]
pub struct LabelCache<O> {
    inner: O,
    cache: HashMap<usize, bool>,
    calls: usize,
}

impl<O> LabelCache<O> {
    pub fn new(inner: O) -> Self {
        Self { inner, cache: HashMap::new(), calls: 0 }
    }

    /// Number of evaluations forwarded to the wrapped oracle.
    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn into_inner(self) -> O {
        self.inner
    }

    pub fn label<S>(&mut self, draw: &DrawRecord<S>) -> Result<bool>
    where
        O: LabelOracle<S>,
    {
        if let Some(i) = draw.index {
            if let Some(&s) = self.cache.get(&i) {
                return Ok(s);
            }
        }
        self.calls += 1;
        let s = self
            .inner
            .label(draw)
            .map_err(|message| Error::Oracle { index: draw.index.unwrap_or(usize::MAX), message })?;
        if let Some(i) = draw.index {
            self.cache.insert(i, s);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegSelection<S> {
    Fixed(RegularizerConfig<S>),
    /// Leave-one-out over this grid on the first `n0` points of the run.
    LeaveOneOut(Vec<S>),
}

#[derive(Debug, Clone)]
pub struct IsalConfig<S> {
    /// Total number of labelled draws, warm-up included.
    pub n: usize,
    /// Warm-up draws taken from `q_{θ̂₀,ε}` before θ̂ is first updated.
    pub n0: usize,
    pub epsilon: S,
    pub regularization: RegSelection<S>,
    pub bounds: ParamBounds<S>,
    /// Sample sizes at which a full multistart fit is recorded; `n` is always added.
    pub checkpoints: Vec<usize>,
    /// Already-labelled draws that open the warm-up in place of the first draws (at most
    /// `n0`), e.g. an initial sample from `p` with unit ratios.
    pub preloaded: Vec<(DrawRecord<S>, bool)>,
}

#[derive(Debug, Clone)]
pub struct IsalTrajectory<S> {
    /// `thetas[i]` is θ̂ᵢ, the estimate after `i` draws; constant at θ̂₀ during warm-up.
    pub thetas: Vec<FragilityParams<S>>,
    pub draws: Vec<DrawRecord<S>>,
    pub labels: Vec<bool>,
    pub warmup: usize,
    pub epsilon: S,
    pub reg: RegularizerConfig<S>,
    pub loo: Option<LooSelection<S>>,
    pub bounds: ParamBounds<S>,
    pub marginal: MarginalModel<S>,
    /// Multistart fits at the configured checkpoints, ascending in `n`.
    pub checkpoints: Vec<FitResult<S>>,
    /// Distinct oracle evaluations.
    pub oracle_calls: usize,
}

impl<S: Scalar> IsalTrajectory<S> {
    pub fn n(&self) -> usize {
        self.draws.len()
    }

    pub fn dataset(&self, n: usize) -> WeightedDataset<S> {
        let points = self.draws[..n]
            .iter()
            .zip(&self.labels)
            .map(|(d, &s)| LabeledPoint { x: d.x, s, w: d.likelihood_ratio })
            .collect();
        WeightedDataset::new(points, Provenance::Isal)
    }

    pub fn final_fit(&self) -> &FitResult<S> {
        self.checkpoints.last().expect("final fit always recorded")
    }

    pub fn fit_at(&self, n: usize) -> Option<&FitResult<S>> {
        self.checkpoints.iter().find(|f| f.n == n)
    }

    /// Truncated view of the run after its first `n` draws, for prefix inference.
    pub fn prefix(&self, n: usize) -> Self {
        assert!(n <= self.n());
        Self {
            thetas: self.thetas[..=n].to_vec(),
            draws: self.draws[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            checkpoints: self.checkpoints.iter().filter(|f| f.n <= n).copied().collect(),
            ..self.clone()
        }
    }
}

fn normalized_checkpoints(requested: &[usize], lo: usize, n: usize) -> Vec<usize> {
    let mut c: Vec<usize> = requested.iter().copied().filter(|&k| k >= lo && k <= n).collect();
    c.push(n);
    c.sort_unstable();
    c.dedup();
    c
}

/// Importance-sampling active learning.
///
/// Draw `i` comes from `q_{θ̂ᵢ₋₁,ε}`; θ̂ stays at `theta0` for the first `n0` draws and is refit
/// after every later draw by minimising the weighted risk of all points so far, with the
/// penalty scaled by the final size `n`. Intermediate refits are warm-started local solves;
/// checkpoints (and the final size) get the full multistart fit.
pub fn isal_run<S: Scalar, O: LabelOracle<S>, R: Rng + ?Sized>(
    marginal: &MarginalModel<S>,
    oracle: &mut O,
    theta0: &FragilityParams<S>,
    cfg: &IsalConfig<S>,
    rng: &mut R,
) -> Result<IsalTrajectory<S>> {
    if cfg.n0 < 1 || cfg.n < cfg.n0 {
        return Err(Error::InvalidArgument(format!("need n >= n0 >= 1, got n={} n0={}", cfg.n, cfg.n0)));
    }
    if cfg.preloaded.len() > cfg.n0 {
        return Err(Error::InvalidArgument(format!(
            "{} preloaded draws exceed the warm-up of {}",
            cfg.preloaded.len(),
            cfg.n0
        )));
    }
    if !cfg.bounds.contains(theta0) {
        return Err(Error::InvalidArgument(format!("initial parameter {theta0:?} outside bounds")));
    }
    let checkpoints = normalized_checkpoints(&cfg.checkpoints, cfg.n0, cfg.n);
    let mut cache = LabelCache::new(oracle);
    let mut thetas = vec![*theta0];
    let mut draws = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    let mut fits = Vec::with_capacity(checkpoints.len());
    let mut reg = match &cfg.regularization {
        RegSelection::Fixed(r) => *r,
        RegSelection::LeaveOneOut(_) => RegularizerConfig::none(),
    };
    let mut loo = None;
    let mut theta = *theta0;
    let mut density = marginal.defensive(&theta, cfg.epsilon)?;
    let mut data = WeightedDataset::new(Vec::with_capacity(cfg.n), Provenance::Isal);
    for i in 1..=cfg.n {
        let (d, s) = match cfg.preloaded.get(i - 1) {
            Some((d, s)) => (*d, *s),
            None => {
                let d = density.draw(rng);
                let s = cache.label(&d)?;
                (d, s)
            }
        };
        data.points.push(LabeledPoint { x: d.x, s, w: d.likelihood_ratio });
        draws.push(d);
        labels.push(s);
        if i < cfg.n0 {
            thetas.push(theta);
            continue;
        }
        if i == cfg.n0 {
            if let RegSelection::LeaveOneOut(grid) = &cfg.regularization {
                let sel = loo_select_beta_reg(&data, grid, &cfg.bounds, &theta)?;
                reg = sel.config;
                loo = Some(sel);
            }
        }
        let mut fit = if i == cfg.n0 {
            minimize_regularized_risk_n(&data, &reg, cfg.n, &cfg.bounds, &theta)?
        } else {
            refit_regularized_risk_n(&data, &reg, cfg.n, &cfg.bounds, &theta)?
        };
        if checkpoints.binary_search(&i).is_ok() {
            if i != cfg.n0 {
                let global = minimize_regularized_risk_n(&data, &reg, cfg.n, &cfg.bounds, &fit.theta_hat)?;
                if global.risk_value <= fit.risk_value {
                    fit = global;
                }
            }
            fits.push(fit);
        }
        theta = fit.theta_hat;
        thetas.push(theta);
        if i < cfg.n {
            density = marginal.defensive(&theta, cfg.epsilon)?;
        }
    }
    Ok(IsalTrajectory {
        thetas,
        draws,
        labels,
        warmup: cfg.n0,
        epsilon: cfg.epsilon,
        reg,
        loo,
        bounds: cfg.bounds,
        marginal: marginal.clone(),
        checkpoints: fits,
        oracle_calls: cache.calls(),
    })
}

#[derive(Debug, Clone)]
pub struct RsConfig<S> {
    /// Total dataset size, preloaded points included.
    pub n: usize,
    /// Size of the leading sample used for leave-one-out selection.
    pub n0: usize,
    pub regularization: RegSelection<S>,
    pub bounds: ParamBounds<S>,
    pub checkpoints: Vec<usize>,
    /// Initial point of the multistart fits.
    pub theta_start: FragilityParams<S>,
}

#[derive(Debug, Clone)]
pub struct RsTrajectory<S> {
    pub data: WeightedDataset<S>,
    pub draws: Vec<DrawRecord<S>>,
    pub reg: RegularizerConfig<S>,
    pub loo: Option<LooSelection<S>>,
    pub checkpoints: Vec<FitResult<S>>,
    pub oracle_calls: usize,
}

impl<S: Scalar> RsTrajectory<S> {
    pub fn final_fit(&self) -> &FitResult<S> {
        self.checkpoints.last().expect("final fit always recorded")
    }

    pub fn fit_at(&self, n: usize) -> Option<&FitResult<S>> {
        self.checkpoints.iter().find(|f| f.n == n)
    }
}

/// Passive learning: i.i.d. draws from `p` with unit weights and regularised empirical risk
/// minimisation. Draws go through the same sampler as IS-AL with `ε = 1`.
pub fn rs_run<S: Scalar, O: LabelOracle<S>, R: Rng + ?Sized>(
    marginal: &MarginalModel<S>,
    oracle: &mut O,
    init: Option<WeightedDataset<S>>,
    cfg: &RsConfig<S>,
    rng: &mut R,
) -> Result<RsTrajectory<S>> {
    let mut data = init.unwrap_or_else(|| WeightedDataset::new(Vec::new(), Provenance::Rs));
    data.provenance = Provenance::Rs;
    if cfg.n < data.len() || cfg.n == 0 {
        return Err(Error::InvalidArgument(format!(
            "random sampling size {} must be positive and cover the {} preloaded points",
            cfg.n,
            data.len()
        )));
    }
    let density = marginal.defensive(&cfg.theta_start, S::one())?;
    let mut cache = LabelCache::new(oracle);
    let mut draws = Vec::with_capacity(cfg.n - data.len());
    while data.len() < cfg.n {
        let d = density.draw(rng);
        let s = cache.label(&d)?;
        data.points.push(LabeledPoint { x: d.x, s, w: S::one() });
        draws.push(d);
    }
    let (reg, loo) = match &cfg.regularization {
        RegSelection::Fixed(r) => (*r, None),
        RegSelection::LeaveOneOut(grid) => {
            let head = data.prefix(cfg.n0.clamp(1, data.len()));
            let sel = loo_select_beta_reg(&head, grid, &cfg.bounds, &cfg.theta_start)?;
            (sel.config, Some(sel))
        }
    };
    let mut start = cfg.theta_start;
    let mut fits = Vec::new();
    for k in normalized_checkpoints(&cfg.checkpoints, 1, cfg.n) {
        let fit = minimize_regularized_risk(&data.prefix(k), &reg, &cfg.bounds, &start)?;
        start = fit.theta_hat;
        fits.push(fit);
    }
    Ok(RsTrajectory { data, draws, reg, loo, checkpoints: fits, oracle_calls: cache.calls() })
}

/// MLE fits of the leading `k` points of `data` at each checkpoint.
pub fn mle_path<S: Scalar>(
    data: &WeightedDataset<S>,
    checkpoints: &[usize],
    bounds: &ParamBounds<S>,
    start: &FragilityParams<S>,
) -> Result<Vec<FitResult<S>>> {
    let mut start = *start;
    normalized_checkpoints(checkpoints, 1, data.len())
        .into_iter()
        .map(|k| {
            let mut d = data.prefix(k);
            d.provenance = Provenance::Mle;
            let fit = mle_fit(&d, bounds, &start)?;
            start = fit.theta_hat;
            Ok(fit)
        })
        .collect()
}
