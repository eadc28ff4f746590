use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn msk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn only_file(dir: &Path, ext: &str) -> PathBuf {
    let mut found: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_str().unwrap().ends_with(ext))
        .collect();
    assert_eq!(found.len(), 1, "{found:?}");
    found.pop().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = msk(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_or_invalid_config_exits_two() {
    assert_eq!(msk(&["pressure"]).status.code(), Some(2));
    assert_eq!(msk(&["pressure", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nr = 1\nzeta = [0.5]\ngamma = [1.0]\nunknown = 3\n").unwrap();
    assert_eq!(msk(&["pressure", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let big = dir.path().join("big.toml");
    std::fs::write(&big, "[model]\nr = 1\nzeta = [0.5]\ngamma = [1.0]\n[pressure]\nn = [40]\n").unwrap();
    let out = msk(&["pressure", "--config", big.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = msk(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn closed_form_pressure_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("closed_form.toml");
    let out = msk(&[
        "pressure",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(only_file(dir.path(), ".csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("config_hash,n,estimator,estimate,stderr,replicas,seed")
    );
    let target = LN_2 + 0.25;
    let mut rows = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (est, se): (f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap());
        assert!((est - target).abs() <= 3.0 * se, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 2);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(only_file(dir.path(), ".json")).unwrap()).unwrap();
    assert_eq!(json["command"], "pressure");
    assert_eq!(json["config"]["model"]["zeta"][0], 0.5);
}

#[test]
fn flags_override_config_and_change_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("closed_form.toml");
    for seed in ["3", "4"] {
        let out = msk(&[
            "parisi-eval",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            seed,
            "--replicas",
            "50",
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let n = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(n, 4);
}

#[test]
fn artifacts_are_write_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("closed_form.toml");
    let args = [
        "parisi-eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--replicas",
        "20",
    ];
    assert_eq!(msk(&args).status.code(), Some(0));
    let json = only_file(dir.path(), ".json");
    let first = std::fs::read(&json).unwrap();
    assert_eq!(msk(&args).status.code(), Some(0));
    assert_eq!(std::fs::read(&json).unwrap(), first);
    std::fs::write(&json, b"tampered").unwrap();
    assert_eq!(msk(&args).status.code(), Some(1));
    assert_eq!(std::fs::read(&json).unwrap(), b"tampered");
}

#[test]
fn verify_bound_single_spin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("closed_form.toml");
    let out = msk(&[
        "verify-bound",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--replicas",
        "2000",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(only_file(dir.path(), ".json")).unwrap()).unwrap();
    let gap = json["result"]["report"]["rows"][0]["gap"].as_f64().unwrap();
    let best = json["result"]["report"]["rows"][0]["best_value"].as_f64().unwrap();
    assert!(best - (LN_2 + 0.25) >= 0.0);
    assert!(gap > -0.05);
}
