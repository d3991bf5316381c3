use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isal_cli::commands::{self, POOL_DIR};
use isal_cli::config::{CaseConfig, StudyConfig};
use isal_cli::{CliError, OUT_ENV};

#[derive(Parser)]
#[command(name = "isal", version, about = "Importance-sampling active learning for seismic fragility curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Study config (TOML). A `preset = "<name>"` key fills in every omitted field.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset used instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output root; takes precedence over the config's `output_dir`.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// gen-pool: signal seed; run-study: base replication seed; report: band seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the oscillator signal pool and test set.
    GenPool {
        #[command(flatten)]
        common: Common,
        /// Also write every pool accelerogram as a text file.
        #[arg(long)]
        signals: bool,
    },
    /// Run all replications of the configured study.
    RunStudy {
        #[command(flatten)]
        common: Common,
        /// Record wall-clock timing in the manifest (breaks byte-identical reruns).
        #[arg(long)]
        timing: bool,
    },
    /// Summarise a completed study and export figure data.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Print the fully resolved config.
    ShowConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<Option<StudyConfig>, CliError> {
    match (&common.config, &common.preset) {
        (Some(path), _) => StudyConfig::load(path).map(Some),
        (None, Some(name)) => isal_cli::preset(name).map(Some),
        (None, None) => Ok(None),
    }
}

fn require(cfg: Option<StudyConfig>) -> Result<StudyConfig, CliError> {
    cfg.ok_or_else(|| CliError::config("one of --config or --preset is required"))
}

fn out_dir(common: &Common, cfg: Option<&StudyConfig>) -> Result<PathBuf, CliError> {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .ok_or_else(|| CliError::config(format!("no output directory: pass --out, set {OUT_ENV}, or set output_dir")))
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start {k} worker threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenPool { common, signals } => {
            init_threads(common.threads)?;
            let mut cfg = require(load(&common)?)?;
            if let (Some(seed), CaseConfig::Oscillator(o)) = (common.seed, &mut cfg.case) {
                o.seed = seed;
            }
            let out = out_dir(&common, Some(&cfg))?;
            let m = commands::gen_pool(&cfg, &out, signals)?;
            println!("wrote {} pool and {} test signals to {}", m.pool_size, m.test_size, out.join(POOL_DIR).display());
        }
        Command::RunStudy { common, timing } => {
            init_threads(common.threads)?;
            let mut cfg = require(load(&common)?)?;
            if let Some(seed) = common.seed {
                cfg.plan.base_seed = seed;
            }
            let out = out_dir(&common, Some(&cfg))?;
            for (eps, res) in commands::run_study(&cfg, &out, timing)? {
                let label = eps.map_or(String::new(), |e| format!("epsilon = {e}: "));
                println!(
                    "{label}{} replications ok, {} failed; {} pairs ok",
                    res.records.len(),
                    res.failures.len(),
                    res.pairs.len()
                );
            }
            println!("wrote study to {}", out.display());
        }
        Command::Report { common } => {
            init_threads(common.threads)?;
            let cfg = load(&common)?;
            let out = out_dir(&common, cfg.as_ref())?;
            print!("{}", commands::report(&out, cfg.as_ref(), common.seed)?);
        }
        Command::ShowConfig { common } => {
            let cfg = require(load(&common)?)?;
            print!("{}", cfg.to_toml_string()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.category.exit_code() as u8)
        }
    }
}
