use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isal(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_isal"));
    cmd.args(args).env_remove("ISAL_OUT");
    if let Some(p) = env_out {
        cmd.env("ISAL_OUT", p);
    }
    cmd.output().expect("isal runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "preset = \"synthetic-paper\"\n[plan]\nn = 60\ncheckpoints = [20, 40, 60]\n\
    inference_checkpoints = [60]\nw_checkpoints = [60]\nreplications = 3\npairs = 1\nbootstrap = 10\n\
    [case]\ntest_size = 500\n";

#[test]
fn show_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = isal(&["show-config", "--preset", "oscillator-paper"], None);
    assert!(o.status.success());
    let path = dir.path().join("osc.toml");
    fs::write(&path, &o.stdout).unwrap();
    let again = isal(&["show-config", "--config", path.to_str().unwrap()], None);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn errors_carry_category_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = isal(&["show-config", "--preset", "no-such-preset"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]"), "{}", stderr(&o));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "preset = \"synthetic-paper\"\n[plan]\nepsilon = 1.5\n").unwrap();
    let o = isal(&["show-config", "--config", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));

    let o = isal(&["show-config", "--config", dir.path().join("missing.toml").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[io]"));

    // run-study without an output location
    let o = isal(&["run-study", "--preset", "synthetic-paper"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ISAL_OUT"));
}

#[test]
fn report_names_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = isal(&["report", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let msg = stderr(&o);
    assert!(msg.starts_with("error[input]") && msg.contains("metrics.csv") && msg.contains("run-study"), "{msg}");
}

#[test]
fn oscillator_study_requires_a_pool() {
    let dir = tempfile::tempdir().unwrap();
    let o = isal(&["run-study", "--preset", "oscillator-paper", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("gen-pool"), "{}", stderr(&o));
}

#[test]
fn small_study_end_to_end_with_env_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("study");
    let o = isal(&["run-study", "--config", cfg.to_str().unwrap()], Some(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["config.toml", "metrics.csv", "checkpoints.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("# manifest=manifest.json config="));

    let o = isal(&["report", "--config", cfg.to_str().unwrap()], Some(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("risk metrics at n = 60"));
    assert!(out.join("report/summary.txt").is_file());

    // --out wins over the environment
    let other = dir.path().join("other");
    let o = isal(
        &["run-study", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap(), "--seed", "5"],
        Some(&out),
    );
    assert!(o.status.success());
    assert!(other.join("metrics.csv").is_file());
    assert_ne!(fs::read(other.join("metrics.csv")).unwrap(), fs::read(out.join("metrics.csv")).unwrap());

    // a report against a different configuration is refused
    let o = isal(&["report", "--preset", "synthetic-paper"], Some(&out));
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
