use std::io::BufWriter;
use std::path::Path;

use isal_core::benchlab::{simulate_record, OscillatorCaseConfig, SignalRecord, TEST_SIGNAL_STREAM};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, CaseConfig, StudyConfig};
use crate::error::CliError;
use crate::output::{self, ArtifactWriter, FileEntry, MANIFEST};

pub const POOL_DIR: &str = "pool";
pub const POOL_TABLE: &str = "pool_im.csv";
pub const TEST_TABLE: &str = "test_im.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub tool: String,
    pub command: String,
    /// Hash of the oscillator-case section the pool was simulated from.
    pub case_hash: String,
    pub seed: u64,
    pub pool_size: usize,
    pub test_size: usize,
    pub signal_files: bool,
    pub files: Vec<FileEntry>,
}

pub fn case_hash(case: &OscillatorCaseConfig) -> Result<String, CliError> {
    let text = toml::to_string(case).map_err(|e| CliError::config(format!("cannot serialise case: {e}")))?;
    Ok(sha256_hex(text.as_bytes()))
}

fn oscillator(cfg: &StudyConfig) -> Result<&OscillatorCaseConfig, CliError> {
    match &cfg.case {
        CaseConfig::Oscillator(o) => Ok(o),
        CaseConfig::Synthetic(_) => Err(CliError::config("gen-pool applies to the oscillator case only")),
    }
}

fn simulate(case: &OscillatorCaseConfig, streams: Vec<u64>) -> Result<Vec<SignalRecord>, CliError> {
    Ok(streams.into_par_iter().map(|s| simulate_record(case, s)).collect::<isal_core::Result<Vec<_>>>()?)
}

/// Simulates the pool and the test signals of an oscillator config into `<out>/pool`.
pub fn gen_pool(cfg: &StudyConfig, out: &Path, signal_files: bool) -> Result<PoolManifest, CliError> {
    let case = oscillator(cfg)?;
    let hash = case_hash(case)?;
    let pool = simulate(case, (0..case.pool_size as u64).collect())?;
    let test = simulate(case, (0..case.test_size as u64).map(|i| TEST_SIGNAL_STREAM + i).collect())?;
    let mut w = ArtifactWriter::new(&out.join(POOL_DIR), &hash)?;
    w.csv(POOL_TABLE, &pool)?;
    w.csv(TEST_TABLE, &test)?;
    if signal_files {
        let dir = w.path("signals");
        output::create_dir(&dir)?;
        for r in &pool {
            let path = dir.join(format!("pool_{:06}.txt", r.stream));
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            case.signal(r.stream).write_text(BufWriter::new(file)).map_err(|e| CliError::io(&path, e))?;
        }
    }
    let manifest = PoolManifest {
        tool: output::tool_version(),
        command: "gen-pool".into(),
        case_hash: hash,
        seed: case.seed,
        pool_size: pool.len(),
        test_size: test.len(),
        signal_files,
        files: w.files.clone(),
    };
    w.finish(&manifest)?;
    Ok(manifest)
}

/// Reads a pool written by [`gen_pool`], checking it was simulated from `case`.
pub fn load_pool(dir: &Path, case: &OscillatorCaseConfig) -> Result<(Vec<SignalRecord>, Vec<SignalRecord>), CliError> {
    output::require(dir, "pool artifacts", &[MANIFEST, POOL_TABLE, TEST_TABLE], "; run `isal gen-pool` first")?;
    let manifest: PoolManifest = output::read_json(&dir.join(MANIFEST))?;
    if manifest.case_hash != case_hash(case)? {
        return Err(CliError::input(format!(
            "pool in {} was generated from a different oscillator configuration; rerun `isal gen-pool`",
            dir.display()
        )));
    }
    let pool: Vec<SignalRecord> = output::read_csv(&dir.join(POOL_TABLE))?;
    let test: Vec<SignalRecord> = output::read_csv(&dir.join(TEST_TABLE))?;
    if pool.len() != manifest.pool_size || test.len() != manifest.test_size {
        return Err(CliError::input(format!("pool tables in {} do not match their manifest", dir.display())));
    }
    Ok((pool, test))
}
