use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use isal_core::benchlab::{
    fragility_ci_from_asymptotics, nonparametric_reference, MetricsRow, Side, SignalRecord, Strategy,
};
use isal_core::dynamics::quantile_type7;
use isal_core::model::fragility_prob;
use isal_core::{FragilityParams, Mat2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gen_pool::POOL_TABLE;
use super::run_study::*;
use crate::config::{CaseConfig, StudyConfig};
use crate::error::CliError;
use crate::output::{self, ArtifactWriter, FileEntry, MANIFEST};

pub const REPORT_DIR: &str = "report";
pub const SUMMARY: &str = "summary.txt";

const GRID_POINTS: usize = 101;
const BAND_DRAWS: usize = 2000;
const KMEANS_CLUSTERS: usize = 30;
const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub tool: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamBandRow {
    strategy: Strategy,
    n: usize,
    param: String,
    mean: f64,
    q10: f64,
    q50: f64,
    q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CevRow {
    strategy: Strategy,
    n: usize,
    available: usize,
    q10: Option<f64>,
    median: Option<f64>,
    q90: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FragilityRow {
    strategy: Strategy,
    replication: usize,
    n: usize,
    x: f64,
    im: f64,
    point: f64,
    lower: f64,
    upper: f64,
    /// Curve of the true (or large-sample) parameter.
    reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReferenceRow {
    im: f64,
    x: f64,
    fraction: f64,
    count: usize,
    reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RejectionRow {
    n: usize,
    pairs: usize,
    rejected: usize,
    rate: f64,
}

/// Writes `<dir>/report`: a text summary and one data file per figure. A sweep root gets a
/// sweep summary and a report in every swept study.
pub fn report(dir: &Path, expected: Option<&StudyConfig>, seed: Option<u64>) -> Result<String, CliError> {
    if dir.join(SWEEP).is_file() && !dir.join(METRICS).is_file() {
        return report_sweep(dir, expected, seed);
    }
    output::require(dir, "study artifacts", &STUDY_ARTIFACTS, "; run `isal run-study` first")?;
    let cfg = StudyConfig::load(&dir.join(CONFIG_FILE))?;
    check_expected(dir, &cfg, expected)?;
    let seed = seed.unwrap_or(cfg.plan.base_seed);
    let info: CaseInfo = output::read_json(&dir.join(CASE_FILE))?;
    let manifest: StudyManifest = output::read_json(&dir.join(MANIFEST))?;
    let metrics: Vec<MetricsRow> = output::read_csv(&dir.join(METRICS))?;
    let checkpoints: Vec<CheckpointRow> = output::read_csv(&dir.join(CHECKPOINTS))?;
    let replications: Vec<ReplicationRow> = output::read_csv(&dir.join(REPLICATIONS))?;
    let convergence: Vec<ConvergenceRow> = output::read_csv(&dir.join(CONVERGENCE))?;
    let coverage: Vec<CoverageRow> = output::read_csv(&dir.join(COVERAGE))?;
    let failures: Vec<FailureRow> = output::read_csv(&dir.join(FAILURES))?;
    let pool = match &info.pool_dir {
        Some(p) => {
            let pool_dir = dir.join(p);
            output::require(&pool_dir, "pool artifacts", &[POOL_TABLE], "")?;
            Some(output::read_csv::<SignalRecord>(&pool_dir.join(POOL_TABLE))?)
        }
        None => None,
    };

    let hash = cfg.hash()?;
    let mut w = ArtifactWriter::new(&dir.join(REPORT_DIR), &hash)?;
    w.csv("fig_loss.csv", &metrics)?;
    w.csv("fig_params.csv", &param_bands(&checkpoints))?;
    w.csv("fig_w.csv", &convergence)?;
    let rejection = rejection_rates(&convergence);
    w.csv("fig_w_rejection.csv", &rejection)?;
    w.csv("fig_cp.csv", &coverage)?;
    w.csv("fig_cev.csv", &cev_bands(&checkpoints))?;
    let grid = x_grid(&cfg, pool.as_deref());
    w.csv("fig_fragility.csv", &fragility_bands(&cfg, &info, &checkpoints, &grid, seed)?)?;
    if let Some(pool) = &pool {
        let im: Vec<f64> = pool.iter().map(|r| r.im).collect();
        let capacity = info.capacity.unwrap_or(f64::INFINITY);
        let labels: Vec<bool> = pool.iter().map(|r| r.d_nonlinear > capacity).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let curve = nonparametric_reference(&im, &labels, KMEANS_CLUSTERS, KMEANS_RESTARTS, &mut rng)?;
        let rows: Vec<ReferenceRow> = curve
            .centers
            .iter()
            .zip(&curve.fractions)
            .zip(&curve.counts)
            .map(|((&c, &fraction), &count)| ReferenceRow {
                im: c,
                x: c.ln(),
                fraction,
                count,
                reference: fragility_prob(&info.theta_star, c.ln()),
            })
            .collect();
        w.csv("fig_reference.csv", &rows)?;
    }
    let text = summary(&cfg, &info, &manifest, &metrics, &coverage, &rejection, &replications, &failures);
    w.text(SUMMARY, &text)?;
    let m = ReportManifest {
        tool: output::tool_version(),
        command: "report".into(),
        config_hash: hash,
        seed,
        files: w.files.clone(),
    };
    w.finish(&m)?;
    Ok(text)
}

fn check_expected(dir: &Path, found: &StudyConfig, expected: Option<&StudyConfig>) -> Result<(), CliError> {
    match expected {
        Some(e) if e.hash()? != found.hash()? => {
            Err(CliError::input(format!("the study in {} was produced by a different configuration", dir.display())))
        }
        _ => Ok(()),
    }
}

fn report_sweep(dir: &Path, expected: Option<&StudyConfig>, seed: Option<u64>) -> Result<String, CliError> {
    output::require(dir, "sweep artifacts", &[CONFIG_FILE, MANIFEST, SWEEP], "")?;
    let cfg = StudyConfig::load(&dir.join(CONFIG_FILE))?;
    check_expected(dir, &cfg, expected)?;
    let manifest: SweepManifest = output::read_json(&dir.join(MANIFEST))?;
    let rows: Vec<SweepRow> = output::read_csv(&dir.join(SWEEP))?;
    for s in &manifest.studies {
        report(&dir.join(s), None, seed)?;
    }
    let mut text = format!("study: {} (epsilon sweep), config {}\n\n", cfg.name, &manifest.config_hash[..12]);
    let _ = writeln!(
        text,
        "{:>10} {:>6} {:>12} {:>12} {:>10} {:>10}",
        "epsilon", "n", "isal_mean", "isal_rsd%", "nu_rs", "nu_mle"
    );
    for r in &rows {
        let _ = writeln!(
            text,
            "{:>10} {:>6} {:>12.5} {:>12.2} {:>10.3} {:>10.3}",
            r.epsilon,
            r.n,
            r.isal_test_mean,
            100.0 * r.isal_test_rsd,
            r.nu_rs_test,
            r.nu_mle_test
        );
    }
    let _ = writeln!(
        text,
        "\nper-epsilon reports: {}",
        manifest.studies.iter().map(|s| format!("{s}/{REPORT_DIR}")).collect::<Vec<_>>().join(", ")
    );
    let mut w = ArtifactWriter::new(&dir.join(REPORT_DIR), &manifest.config_hash)?;
    w.text(SUMMARY, &text)?;
    let m = ReportManifest {
        tool: output::tool_version(),
        command: "report".into(),
        config_hash: manifest.config_hash.clone(),
        seed: seed.unwrap_or(cfg.plan.base_seed),
        files: w.files.clone(),
    };
    w.finish(&m)?;
    Ok(text)
}

fn q(v: &[f64], p: f64) -> f64 {
    quantile_type7(v, p).unwrap_or(f64::NAN)
}

fn groups(rows: &[CheckpointRow]) -> BTreeSet<(Strategy, usize)> {
    rows.iter().map(|c| (c.strategy, c.n)).collect()
}

fn param_bands(rows: &[CheckpointRow]) -> Vec<ParamBandRow> {
    let mut out = Vec::new();
    for (s, n) in groups(rows) {
        let sel: Vec<&CheckpointRow> = rows.iter().filter(|c| c.strategy == s && c.n == n).collect();
        for (param, get) in
            [("alpha", (|c: &CheckpointRow| c.alpha) as fn(&CheckpointRow) -> f64), ("beta", |c| c.beta)]
        {
            let v: Vec<f64> = sel.iter().map(|c| get(c)).collect();
            out.push(ParamBandRow {
                strategy: s,
                n,
                param: param.into(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                q10: q(&v, 0.1),
                q50: q(&v, 0.5),
                q90: q(&v, 0.9),
            });
        }
    }
    out
}

fn cev_bands(rows: &[CheckpointRow]) -> Vec<CevRow> {
    groups(rows)
        .into_iter()
        .filter_map(|(s, n)| {
            let v: Vec<f64> = rows.iter().filter(|c| c.strategy == s && c.n == n).filter_map(|c| c.cev).collect();
            let any_cov = rows.iter().any(|c| c.strategy == s && c.n == n && c.cov_aa.is_some());
            (any_cov || !v.is_empty()).then(|| CevRow {
                strategy: s,
                n,
                available: v.len(),
                q10: quantile_type7(&v, 0.1).ok(),
                median: quantile_type7(&v, 0.5).ok(),
                q90: quantile_type7(&v, 0.9).ok(),
            })
        })
        .collect()
}

fn rejection_rates(rows: &[ConvergenceRow]) -> Vec<RejectionRow> {
    let ns: BTreeSet<usize> = rows.iter().map(|r| r.n).collect();
    ns.into_iter()
        .map(|n| {
            let sel: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.n == n).collect();
            let rejected = sel.iter().filter(|r| r.reject).count();
            RejectionRow { n, pairs: sel.len(), rejected, rate: rejected as f64 / sel.len() as f64 }
        })
        .collect()
}

fn x_grid(cfg: &StudyConfig, pool: Option<&[SignalRecord]>) -> Vec<f64> {
    let (lo, hi) = match (&cfg.case, pool) {
        (CaseConfig::Synthetic(s), _) => {
            let sd = s.variance.sqrt();
            (s.mean - 3.0 * sd, s.mean + 3.0 * sd)
        }
        (CaseConfig::Oscillator(_), Some(p)) if !p.is_empty() => {
            let xs = p.iter().map(|r| r.im.ln());
            (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max))
        }
        _ => (cfg.plan.bounds.alpha.0.ln(), cfg.plan.bounds.alpha.1.ln()),
    };
    (0..GRID_POINTS).map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// Pointwise bands of the first replication with a covariance at the largest inference size,
/// from the plug-in covariance (IS-AL) and the bootstrap covariance (MLE).
fn fragility_bands(
    cfg: &StudyConfig,
    info: &CaseInfo,
    rows: &[CheckpointRow],
    grid: &[f64],
    seed: u64,
) -> Result<Vec<FragilityRow>, CliError> {
    let xi = cfg.plan.xi;
    let band = ((1.0 - xi) / 2.0, (1.0 + xi) / 2.0);
    let mut out = Vec::new();
    let Some(&n) = cfg.plan.inference_checkpoints.iter().max() else {
        return Ok(out);
    };
    for (k, s) in [Strategy::Isal, Strategy::Mle].into_iter().enumerate() {
        let found = rows.iter().find(|c| c.strategy == s && c.n == n && c.cov_aa.is_some() && c.cev.is_some());
        let Some(c) = found else { continue };
        let (Some(a), Some(b), Some(d)) = (c.cov_aa, c.cov_ab, c.cov_bb) else { continue };
        let cov = Mat2([[a, b], [b, d]]).scale(1.0 / n as f64);
        let theta = FragilityParams::new(c.alpha, c.beta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let pts = fragility_ci_from_asymptotics(&theta, &cov, &cfg.plan.bounds, grid, BAND_DRAWS, band, &mut rng)?;
        out.extend(pts.into_iter().map(|p| FragilityRow {
            strategy: s,
            replication: c.replication,
            n,
            x: p.x,
            im: p.x.exp(),
            point: p.point,
            lower: p.lower,
            upper: p.upper,
            reference: fragility_prob(&info.theta_star, p.x),
        }));
    }
    Ok(out)
}

fn pct(v: f64) -> String {
    if v.is_finite() {
        format!("{:.1}", 100.0 * v)
    } else {
        "NaN".into()
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        "NaN".into()
    }
}

#[allow(clippy::too_many_arguments)]
fn summary(
    cfg: &StudyConfig,
    info: &CaseInfo,
    manifest: &StudyManifest,
    metrics: &[MetricsRow],
    coverage: &[CoverageRow],
    rejection: &[RejectionRow],
    replications: &[ReplicationRow],
    failures: &[FailureRow],
) -> String {
    let plan = &cfg.plan;
    let mut t = String::new();
    let kind = match &cfg.case {
        CaseConfig::Synthetic(_) => "synthetic",
        CaseConfig::Oscillator(_) => "oscillator",
    };
    let _ = writeln!(t, "study: {} ({kind} case), config {}", cfg.name, &manifest.config_hash[..12]);
    let _ = writeln!(
        t,
        "n = {}, n0 = {}, epsilon = {}, xi = {}, base seed = {}",
        plan.n, plan.n0, plan.epsilon, plan.xi, plan.base_seed
    );
    let _ = writeln!(
        t,
        "replications: {} ok, {} failed; pairs: {} ok, {} failed",
        manifest.replications_ok, manifest.replications_failed, manifest.pairs_ok, manifest.pairs_failed
    );
    let source = if kind == "synthetic" { "analytic" } else { "pool estimate" };
    let _ = writeln!(t, "b = {:.5} ({source})", info.b);
    let _ = writeln!(t, "theta* = (alpha {:.5}, beta {:.5})", info.theta_star.alpha, info.theta_star.beta);
    if let (Some(rate), Some(c)) = (info.failure_rate, info.capacity) {
        let _ = writeln!(t, "capacity = {c} m, pool failure rate = {:.2}%", 100.0 * rate);
    }
    let violations: usize = replications.iter().map(|r| r.ratio_violations).sum();
    let max_ratio = replications.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let _ =
        writeln!(t, "likelihood ratios: max {max_ratio}, {violations} at or above 1/epsilon = {}", 1.0 / plan.epsilon);

    let mut ns: Vec<usize> = vec![plan.n];
    if plan.n != 120 && metrics.iter().any(|m| m.n == 120) {
        ns.insert(0, 120);
    }
    let order = [Strategy::Rs, Strategy::Mle, Strategy::Isal];
    for n in ns {
        let _ = writeln!(t, "\nrisk metrics at n = {n}");
        let _ = writeln!(t, "{:<10}{:>9}{:>9}{:>9} |{:>9}{:>9}{:>9}", "", "train", "", "", "test", "", "");
        let _ = writeln!(t, "{:<10}{:>9}{:>9}{:>9} |{:>9}{:>9}{:>9}", "", "RS", "MLE", "IS-AL", "RS", "MLE", "IS-AL");
        type Field = fn(&MetricsRow) -> String;
        let fields: [(&str, Field); 4] = [
            ("RSD (%)", |m| pct(m.rsd)),
            ("nu", |m| if m.strategy == Strategy::Isal { "x".into() } else { num(m.nu) }),
            ("RB (%)", |m| pct(m.rb)),
            ("mean", |m| format!("{:.5}", m.mean)),
        ];
        for (label, f) in fields {
            let mut line = format!("{label:<10}");
            for side in [Side::Train, Side::Test] {
                if side == Side::Test {
                    line.push_str(" |");
                }
                for s in order {
                    let cell = metrics.iter().find(|m| m.strategy == s && m.n == n && m.side == side).map(f);
                    let _ = write!(line, "{:>9}", cell.unwrap_or_else(|| "-".into()));
                }
            }
            let _ = writeln!(t, "{line}");
        }
    }

    if !coverage.is_empty() {
        let _ = writeln!(t, "\nconfidence ellipsoids (xi = {})", plan.xi);
        let _ = writeln!(t, "{:<8}{:>6}{:>8}{:>8}{:>6}{:>14}", "est.", "n", "CP", "SE", "R", "median CEV");
        for c in coverage {
            let cev = c.median_cev.map_or("-".to_string(), |v| format!("{v:.3e}"));
            let _ = writeln!(t, "{:<8}{:>6}{:>8.3}{:>8.3}{:>6}{:>14}", c.estimator, c.n, c.cp, c.se, c.ellipsoids, cev);
        }
    }
    if !rejection.is_empty() {
        let _ = writeln!(t, "\nconvergence statistic: rejection rate at level {}", plan.w_level);
        for r in rejection {
            let _ = writeln!(t, "  n = {:>4}: {:>3}/{:<3} ({:.3})", r.n, r.rejected, r.pairs, r.rate);
        }
    }
    if !failures.is_empty() {
        let _ = writeln!(t, "\nfailures:");
        for f in failures {
            let _ = writeln!(t, "  {} {}: {}", f.kind, f.index, f.message);
        }
    }
    t
}
