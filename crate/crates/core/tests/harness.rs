use std::path::PathBuf;
use std::process::Command;

use bandit_uplink::harness::{self, ExperimentConfig, HarnessError};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs")).join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bandit-uplink"))
}

#[test]
fn scalar_unknown_run_writes_five_bit_rows() {
    let cfg = ExperimentConfig::load(&config_path("scalar_unknown.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = harness::run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(out.trace_files.len(), 1);
    let text = std::fs::read_to_string(&out.trace_files[0]).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.ends_with(",5")));
    assert!(out.summary_file.exists() && out.manifest_file.exists());
}

#[test]
fn every_checked_in_config_validates() {
    let dir = config_path("");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
            n += 1;
        }
    }
    assert!(n >= 9);
}

#[test]
fn invalid_config_lists_violations_without_running() {
    let mut cfg = ExperimentConfig::load(&config_path("two_arm_known.toml")).unwrap();
    cfg.seeds.clear();
    cfg.environment.num_actions = 3;
    match harness::simulate(&cfg) {
        Err(HarnessError::Invalid(errs)) => assert_eq!(errs.len(), 2, "{errs:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn cli_run_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", config_path("two_arm_known.toml").to_str().unwrap(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace_seed1.csv")).unwrap();
    assert!(trace.lines().skip(1).all(|l| l.ends_with(",1")));

    let pattern = format!("{}/trace_seed*.csv", dir.path().display());
    let out = bin().args(["summarize", &pattern, "--baseline", &pattern]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().ends_with(",ratio"));
    assert_eq!(lines.count(), 4);
    let file_summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(file_summary.lines().nth(1).unwrap().split(',').take(7).collect::<Vec<_>>(),
               text.lines().nth(1).unwrap().split(',').take(7).collect::<Vec<_>>());
}

#[test]
fn cli_failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config_path("two_arm_known.toml")).unwrap().replace("seeds = [", "seeds = [] #");
    std::fs::write(&bad, text).unwrap();
    let out = bin().arg("run").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed list is empty"));
    let missing = bin().args(["summarize", "/nonexistent/*.csv"]).output().unwrap();
    assert!(!missing.status.success());
}

#[test]
fn cli_codec_selftest_and_xstar() {
    let out = bin().args(["codec-selftest", "--max-d", "12", "--samples", "500"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with(" ok")).count(), 12);

    let out = bin().args(["xstar", config_path("counterexample_known.toml").to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["index,canonical,theta_0,xstar_0", "0,0,-1,-0.25", "1,1,1,0.75"]);

    let unknown = bin().args(["xstar", config_path("scalar_unknown.toml").to_str().unwrap()]).output().unwrap();
    assert!(!unknown.status.success());
}
