//! Study configuration: one TOML file, optionally layered over a named preset.

use std::path::{Path, PathBuf};

use isal_core::benchlab::{OscillatorCaseConfig, StudyPlan};
use isal_core::ParamBounds;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const PRESETS: [&str; 4] =
    ["synthetic-paper", "synthetic-inference", "oscillator-paper", "oscillator-epsilon-sweep"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Mean and variance of the Gaussian log-IM marginal.
    pub mean: f64,
    pub variance: f64,
    pub test_size: usize,
    pub test_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseConfig {
    Synthetic(SyntheticConfig),
    Oscillator(OscillatorCaseConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub name: String,
    pub case: CaseConfig,
    pub plan: StudyPlan,
    /// Defensive parameters to sweep; empty runs `plan.epsilon` alone.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon_sweep: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn beta_reg_grid() -> Vec<f64> {
    (0..7).map(|i| 10f64.powf(-4.0 + 0.5 * i as f64)).collect()
}

fn steps(from: usize, to: usize, by: usize) -> Vec<usize> {
    (from..=to).step_by(by).collect()
}

fn synthetic_case() -> CaseConfig {
    let alpha: f64 = 0.3;
    CaseConfig::Synthetic(SyntheticConfig {
        alpha,
        beta: 0.4,
        mean: (alpha / 5.0).ln(),
        variance: 1.69,
        test_size: 10_000,
        test_seed: 7,
    })
}

fn oscillator_case() -> CaseConfig {
    CaseConfig::Oscillator(OscillatorCaseConfig::reference(42))
}

pub fn preset(name: &str) -> Result<StudyConfig, CliError> {
    let plan = |n, replications| StudyPlan {
        n,
        n0: 20,
        epsilon: 1e-3,
        beta_reg_grid: beta_reg_grid(),
        checkpoints: vec![],
        inference_checkpoints: vec![],
        xi: 0.9,
        bootstrap: 0,
        bounds: ParamBounds::default(),
        replications,
        pairs: 0,
        w_checkpoints: vec![],
        w_level: 0.1,
        base_seed: 1000,
    };
    let cfg = match name {
        "synthetic-paper" => StudyConfig {
            name: name.into(),
            case: synthetic_case(),
            plan: StudyPlan {
                checkpoints: steps(20, 120, 10),
                inference_checkpoints: vec![60, 120],
                bootstrap: 200,
                pairs: 20,
                w_checkpoints: steps(40, 120, 20),
                ..plan(120, 200)
            },
            epsilon_sweep: vec![],
            output_dir: None,
        },
        "synthetic-inference" => StudyConfig {
            name: name.into(),
            case: synthetic_case(),
            plan: StudyPlan {
                checkpoints: steps(100, 500, 100),
                inference_checkpoints: vec![300, 500],
                bootstrap: 200,
                pairs: 200,
                w_checkpoints: vec![300, 500],
                ..plan(500, 100)
            },
            epsilon_sweep: vec![],
            output_dir: None,
        },
        "oscillator-paper" => StudyConfig {
            name: name.into(),
            case: oscillator_case(),
            plan: StudyPlan {
                checkpoints: steps(20, 300, 20),
                inference_checkpoints: vec![100, 200, 300],
                bootstrap: 200,
                pairs: 20,
                w_checkpoints: steps(20, 300, 20),
                ..plan(300, 50)
            },
            epsilon_sweep: vec![],
            output_dir: None,
        },
        "oscillator-epsilon-sweep" => StudyConfig {
            name: name.into(),
            case: oscillator_case(),
            plan: StudyPlan { checkpoints: steps(20, 120, 20), ..plan(120, 50) },
            epsilon_sweep: vec![1e-1, 1e-2, 1e-3],
            output_dir: None,
        },
        other => {
            return Err(CliError::config(format!("unknown preset `{other}` (known: {})", PRESETS.join(", "))));
        }
    };
    Ok(cfg)
}

/// Recursively overlays `over` onto `base`; tables merge, everything else replaces.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl StudyConfig {
    /// Parses a config document. A top-level `preset = "<name>"` key supplies every field
    /// the document leaves out; without it the document must be complete.
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e| CliError::config(format!("malformed config: {e}")))?;
        let mut table = match doc.remove("preset") {
            Some(toml::Value::String(name)) => preset(&name)?.to_table()?,
            Some(other) => return Err(CliError::config(format!("`preset` must be a string, got {other}"))),
            None => toml::Table::new(),
        };
        merge(&mut table, doc);
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(format!("invalid config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn to_table(&self) -> Result<toml::Table, CliError> {
        toml::Table::try_from(self).map_err(|e| CliError::config(format!("cannot serialise config: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::config(format!("cannot serialise config: {e}")))
    }

    /// The config as written next to the outputs: output location stripped so that the same
    /// study written to two places is byte-identical.
    pub fn canonical(&self) -> Self {
        Self { output_dir: None, ..self.clone() }
    }

    pub fn hash(&self) -> Result<String, CliError> {
        Ok(sha256_hex(self.canonical().to_toml_string()?.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.plan.validate().map_err(|e| CliError::config(e.to_string()))?;
        if let Some(e) = self.epsilon_sweep.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(CliError::config(format!("epsilon_sweep entry {e} outside (0, 1]")));
        }
        let b = &self.plan.bounds;
        if !(0.0 < b.alpha.0 && b.alpha.0 < b.alpha.1 && 0.0 < b.beta.0 && b.beta.0 < b.beta.1) {
            return Err(CliError::config(format!("degenerate parameter bounds {b:?}")));
        }
        if self.plan.replications == 0 {
            return Err(CliError::config("replications must be positive"));
        }
        match &self.case {
            CaseConfig::Synthetic(s) => {
                if !(s.alpha > 0.0 && s.beta > 0.0 && s.variance > 0.0 && s.mean.is_finite()) {
                    return Err(CliError::config("synthetic case needs alpha, beta, variance > 0 and a finite mean"));
                }
                if s.test_size == 0 {
                    return Err(CliError::config("test_size must be positive"));
                }
            }
            CaseConfig::Oscillator(o) => {
                o.oscillator.validate().map_err(|e| CliError::config(e.to_string()))?;
                if o.test_size == 0 {
                    return Err(CliError::config("test_size must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Studies to run: one per swept ε, or the plan itself.
    pub fn plans(&self) -> Vec<(Option<f64>, StudyPlan)> {
        if self.epsilon_sweep.is_empty() {
            return vec![(None, self.plan.clone())];
        }
        self.epsilon_sweep.iter().map(|&e| (Some(e), StudyPlan { epsilon: e, ..self.plan.clone() })).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Subdirectory of one swept ε.
pub fn sweep_dir(epsilon: f64) -> String {
    format!("eps-{epsilon}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let back = StudyConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }

    #[test]
    fn overrides_layer_on_presets() {
        let cfg = StudyConfig::from_toml_str(
            "preset = \"synthetic-paper\"\n[plan]\nreplications = 3\n[case]\ntest_size = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.plan.replications, 3);
        assert_eq!(cfg.plan.n, 120);
        match cfg.case {
            CaseConfig::Synthetic(s) => assert_eq!((s.test_size, s.variance), (50, 1.69)),
            _ => panic!("wrong case"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "preset = \"synthetic-paper\"\n[plan]\nepsilon = 0.0\n",
            "preset = \"synthetic-paper\"\n[plan]\nepsilon = 1.5\n",
            "preset = \"synthetic-paper\"\n[plan]\nxi = 1.0\n",
            "preset = \"synthetic-paper\"\n[plan]\nn = 10\n",
            "preset = \"nope\"\n",
            "preset = \"synthetic-paper\"\ncolour = 3\n",
        ] {
            let e = StudyConfig::from_toml_str(bad).unwrap_err();
            assert_eq!(e.category, crate::error::Category::Config, "{bad}");
        }
    }

    #[test]
    fn hash_ignores_output_location() {
        let mut a = preset("synthetic-paper").unwrap();
        let h = a.hash().unwrap();
        a.output_dir = Some("/tmp/x".into());
        assert_eq!(a.hash().unwrap(), h);
        a.plan.base_seed += 1;
        assert_ne!(a.hash().unwrap(), h);
    }
}
