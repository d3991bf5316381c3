use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use isal_core::benchlab::{
    self, coverage_probability, median_present, CaseSetup, MetricsRow, OscillatorCase, Side, Strategy, StudyResults,
    SyntheticCase,
};
use isal_core::FragilityParams;
use serde::{Deserialize, Serialize};

use super::gen_pool::{load_pool, POOL_DIR};
use crate::config::{sweep_dir, CaseConfig, StudyConfig};
use crate::error::CliError;
use crate::output::{self, ArtifactWriter, FileEntry, MANIFEST};

pub const CONFIG_FILE: &str = "config.toml";
pub const CASE_FILE: &str = "case.json";
pub const METRICS: &str = "metrics.csv";
pub const CHECKPOINTS: &str = "checkpoints.csv";
pub const REPLICATIONS: &str = "replications.csv";
pub const CONVERGENCE: &str = "convergence.csv";
pub const COMBINED: &str = "combined.csv";
pub const COVERAGE: &str = "coverage.csv";
pub const FAILURES: &str = "failures.csv";
pub const SWEEP: &str = "sweep.csv";

/// Every file a completed single study directory holds.
pub const STUDY_ARTIFACTS: [&str; 10] =
    [CONFIG_FILE, MANIFEST, CASE_FILE, METRICS, CHECKPOINTS, REPLICATIONS, CONVERGENCE, COMBINED, COVERAGE, FAILURES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseInfo {
    pub manifest: String,
    pub theta_star: FragilityParams<f64>,
    /// `E[f*(1−f*)]`: analytic for the synthetic case, a pool mean for the oscillator.
    pub b: f64,
    pub failure_rate: Option<f64>,
    pub capacity: Option<f64>,
    /// Pool location relative to the study directory (oscillator case).
    pub pool_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub replication: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub train_risk: f64,
    pub test_risk: f64,
    pub boundary: bool,
    pub cov_aa: Option<f64>,
    pub cov_ab: Option<f64>,
    pub cov_bb: Option<f64>,
    pub cev: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub seed: u64,
    pub beta_reg_isal: f64,
    pub beta_reg_rs: f64,
    pub theta0_alpha: f64,
    pub theta0_beta: f64,
    pub max_ratio: f64,
    pub ratio_violations: usize,
    pub isal_oracle_calls: usize,
    pub rs_oracle_calls: usize,
    pub isal_distinct_draws: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub pair: usize,
    pub seed: u64,
    pub n: usize,
    pub w_n: f64,
    pub threshold: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedRow {
    pub pair: usize,
    pub seed: u64,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    /// `isal`, `mle`, or `isal12` for the combined pair ellipsoids.
    pub estimator: String,
    pub n: usize,
    pub cp: f64,
    pub se: f64,
    pub ellipsoids: usize,
    pub median_cev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub kind: String,
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub n: usize,
    pub isal_test_mean: f64,
    pub isal_test_rsd: f64,
    pub nu_rs_test: f64,
    pub nu_mle_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCalls {
    pub isal: usize,
    pub rs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub tool: String,
    pub command: String,
    pub name: String,
    pub config_hash: String,
    pub epsilon: f64,
    pub base_seed: u64,
    pub replication_seeds: Vec<u64>,
    pub pair_seeds: Vec<u64>,
    pub replications_ok: usize,
    pub replications_failed: usize,
    pub pairs_ok: usize,
    pub pairs_failed: usize,
    pub oracle_calls: OracleCalls,
    pub files: Vec<FileEntry>,
    /// Wall-clock timing; only with `--timing`, since it breaks byte-identical reruns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub tool: String,
    pub command: String,
    pub name: String,
    pub config_hash: String,
    pub studies: Vec<String>,
    pub files: Vec<FileEntry>,
}

fn build_case(cfg: &StudyConfig, out: &Path) -> Result<CaseSetup, CliError> {
    Ok(match &cfg.case {
        CaseConfig::Synthetic(s) => CaseSetup::Synthetic(SyntheticCase::new(
            FragilityParams::new(s.alpha, s.beta),
            s.mean,
            s.variance,
            s.test_size,
            s.test_seed,
        )?),
        CaseConfig::Oscillator(o) => {
            let (pool, test) = load_pool(&out.join(POOL_DIR), o)?;
            CaseSetup::Oscillator(Arc::new(OscillatorCase::from_records(o.clone(), pool, test, &cfg.plan.bounds)?))
        }
    })
}

/// Runs the configured study (or ε sweep) into `out` and returns the results per study.
pub fn run_study(cfg: &StudyConfig, out: &Path, timing: bool) -> Result<Vec<(Option<f64>, StudyResults)>, CliError> {
    let case = build_case(cfg, out)?;
    let plans = cfg.plans();
    if plans.len() == 1 && plans[0].0.is_none() {
        let res = write_study(&case, cfg, out, Some(POOL_DIR), timing)?;
        return Ok(vec![(None, res)]);
    }
    let mut all = Vec::new();
    let mut rows = Vec::new();
    let mut studies = Vec::new();
    for (eps, plan) in plans {
        let eps = eps.expect("sweep entries carry their epsilon");
        let sub = StudyConfig { plan, epsilon_sweep: vec![], ..cfg.canonical() };
        let name = sweep_dir(eps);
        let res = write_study(&case, &sub, &out.join(&name), Some("../pool"), timing)?;
        for &n in &res.plan.checkpoints.iter().copied().chain([res.plan.n]).collect::<std::collections::BTreeSet<_>>() {
            let get = |s| res.metrics.get(s, n, Side::Test);
            if let (Some(i), Some(r), Some(m)) = (get(Strategy::Isal), get(Strategy::Rs), get(Strategy::Mle)) {
                rows.push(SweepRow {
                    epsilon: eps,
                    n,
                    isal_test_mean: i.mean,
                    isal_test_rsd: i.rsd,
                    nu_rs_test: r.nu,
                    nu_mle_test: m.nu,
                });
            }
        }
        studies.push(name);
        all.push((Some(eps), res));
    }
    let hash = cfg.hash()?;
    let mut w = ArtifactWriter::new(out, &hash)?;
    w.text(CONFIG_FILE, &cfg.canonical().to_toml_string()?)?;
    w.csv(SWEEP, &rows)?;
    let manifest = SweepManifest {
        tool: output::tool_version(),
        command: "run-study".into(),
        name: cfg.name.clone(),
        config_hash: hash,
        studies,
        files: w.files.clone(),
    };
    w.finish(&manifest)?;
    Ok(all)
}

fn cov_entry(c: &Option<isal_core::Mat2<f64>>, i: usize, j: usize) -> Option<f64> {
    c.as_ref().map(|m| m.get(i, j))
}

fn write_study(
    case: &CaseSetup,
    cfg: &StudyConfig,
    dir: &Path,
    pool_dir: Option<&str>,
    timing: bool,
) -> Result<StudyResults, CliError> {
    let started = Instant::now();
    let res = benchlab::run_study(case, &cfg.plan)?;
    let elapsed = started.elapsed().as_secs_f64();
    let hash = cfg.hash()?;
    let mut w = ArtifactWriter::new(dir, &hash)?;
    w.text(CONFIG_FILE, &cfg.canonical().to_toml_string()?)?;

    let info = match case {
        CaseSetup::Synthetic(_) => CaseInfo {
            manifest: MANIFEST.into(),
            theta_star: res.theta_star,
            b: res.b,
            failure_rate: None,
            capacity: None,
            pool_dir: None,
        },
        CaseSetup::Oscillator(c) => CaseInfo {
            manifest: MANIFEST.into(),
            theta_star: res.theta_star,
            b: res.b,
            failure_rate: Some(c.failure_rate()),
            capacity: Some(c.capacity),
            pool_dir: pool_dir.map(String::from),
        },
    };
    w.json(CASE_FILE, &info)?;
    w.csv::<MetricsRow>(METRICS, &res.metrics.rows)?;

    let checkpoints: Vec<CheckpointRow> = res
        .records
        .iter()
        .flat_map(|r| {
            r.checkpoints.iter().map(move |c| CheckpointRow {
                replication: r.replication,
                seed: r.seed,
                strategy: c.strategy,
                n: c.n,
                alpha: c.theta.alpha,
                beta: c.theta.beta,
                train_risk: c.train_risk,
                test_risk: c.test_risk,
                boundary: c.boundary,
                cov_aa: cov_entry(&c.cov, 0, 0),
                cov_ab: cov_entry(&c.cov, 0, 1),
                cov_bb: cov_entry(&c.cov, 1, 1),
                cev: c.cev,
                covered: c.covered,
            })
        })
        .collect();
    w.csv(CHECKPOINTS, &checkpoints)?;

    let replications: Vec<ReplicationRow> = res
        .records
        .iter()
        .map(|r| ReplicationRow {
            replication: r.replication,
            seed: r.seed,
            beta_reg_isal: r.beta_reg_isal,
            beta_reg_rs: r.beta_reg_rs,
            theta0_alpha: r.theta0.alpha,
            theta0_beta: r.theta0.beta,
            max_ratio: r.max_ratio,
            ratio_violations: r.ratio_violations,
            isal_oracle_calls: r.isal_oracle_calls,
            rs_oracle_calls: r.rs_oracle_calls,
            isal_distinct_draws: r.isal_distinct_draws,
        })
        .collect();
    w.csv(REPLICATIONS, &replications)?;

    let convergence: Vec<ConvergenceRow> = res
        .pairs
        .iter()
        .flat_map(|p| {
            p.verdicts.iter().map(move |(n, v)| ConvergenceRow {
                pair: p.pair,
                seed: p.seed,
                n: *n,
                w_n: v.w_n,
                threshold: v.threshold,
                reject: v.reject,
            })
        })
        .collect();
    w.csv(CONVERGENCE, &convergence)?;
    let combined: Vec<CombinedRow> = res
        .pairs
        .iter()
        .flat_map(|p| {
            p.combined.iter().map(move |(n, t, covered)| CombinedRow {
                pair: p.pair,
                seed: p.seed,
                n: *n,
                alpha: t.alpha,
                beta: t.beta,
                covered: *covered,
            })
        })
        .collect();
    w.csv(COMBINED, &combined)?;
    w.csv(COVERAGE, &coverage_rows(&res, &checkpoints, &combined))?;

    let failures: Vec<FailureRow> = res
        .failures
        .iter()
        .map(|(i, m)| FailureRow { kind: "replication".into(), index: *i, message: m.clone() })
        .chain(res.pair_failures.iter().map(|(i, m)| FailureRow { kind: "pair".into(), index: *i, message: m.clone() }))
        .collect();
    w.csv(FAILURES, &failures)?;

    let plan = &cfg.plan;
    let seed_of = |r: usize| plan.base_seed.wrapping_add(r as u64);
    let manifest = StudyManifest {
        tool: output::tool_version(),
        command: "run-study".into(),
        name: cfg.name.clone(),
        config_hash: hash,
        epsilon: plan.epsilon,
        base_seed: plan.base_seed,
        replication_seeds: (0..plan.replications).map(seed_of).collect(),
        pair_seeds: (0..plan.pairs).map(seed_of).collect(),
        replications_ok: res.records.len(),
        replications_failed: res.failures.len(),
        pairs_ok: res.pairs.len(),
        pairs_failed: res.pair_failures.len(),
        oracle_calls: OracleCalls {
            isal: res.records.iter().map(|r| r.isal_oracle_calls).sum(),
            rs: res.records.iter().map(|r| r.rs_oracle_calls).sum(),
        },
        files: w.files.clone(),
        timing: timing.then(|| Timing { seconds: elapsed, threads: rayon::current_num_threads() }),
    };
    w.finish(&manifest)?;
    Ok(res)
}

fn coverage_rows(res: &StudyResults, checkpoints: &[CheckpointRow], combined: &[CombinedRow]) -> Vec<CoverageRow> {
    let mut rows = Vec::new();
    for &n in &res.plan.inference_checkpoints {
        for s in [Strategy::Isal, Strategy::Mle] {
            let recs: Vec<&CheckpointRow> = checkpoints.iter().filter(|c| c.strategy == s && c.n == n).collect();
            let hits: Vec<bool> = recs.iter().filter_map(|c| c.covered).collect();
            if hits.is_empty() {
                continue;
            }
            let c = coverage_probability(&hits);
            let cevs: Vec<Option<f64>> = recs.iter().map(|c| c.cev).collect();
            rows.push(CoverageRow {
                estimator: s.name().into(),
                n,
                cp: c.cp,
                se: c.se,
                ellipsoids: c.replications,
                median_cev: median_present(&cevs),
            });
        }
    }
    let mut ns: Vec<usize> = combined.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    for n in ns {
        let hits: Vec<bool> = combined.iter().filter(|c| c.n == n).filter_map(|c| c.covered).collect();
        if hits.is_empty() {
            continue;
        }
        let c = coverage_probability(&hits);
        rows.push(CoverageRow {
            estimator: "isal12".into(),
            n,
            cp: c.cp,
            se: c.se,
            ellipsoids: c.replications,
            median_cev: None,
        });
    }
    rows
}
