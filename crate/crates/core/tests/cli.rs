use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decoupler")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("ga.json");
    fs::write(&path, r#"{"L": 4, "N": 4, "n_iterations": 2, "shots_per_circuit": 40}"#).unwrap();
    path
}

fn train(dir: &Path, out: &str, threads: &str) -> (Vec<u8>, Vec<u8>) {
    let cfg = small_config(dir);
    let out = dir.join(out);
    let o = run(&[
        "--threads", threads, "train",
        "--circuit", fixture("qft10.json").to_str().unwrap(),
        "--device", fixture("chain10.json").to_str().unwrap(),
        "--partitions", "1x2",
        "--config", cfg.to_str().unwrap(),
        "--seed", "5",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").exists());
    assert!(!out.join("checkpoint.json").exists());
    (fs::read(out.join("strategies.json")).unwrap(), fs::read(out.join("utilities.json")).unwrap())
}

#[test]
fn training_is_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(dir.path(), "a", "1");
    let b = train(dir.path(), "b", "1");
    let c = train(dir.path(), "c", "4");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert!(manifest["timing"]["T_iteration_seconds"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_device_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train",
        "--circuit", fixture("qft10.json").to_str().unwrap(),
        "--device", "/nonexistent/device.json",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/device.json"));
}

#[test]
fn unknown_dd_mode_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "bench", "--kind", "mcm-rb",
        "--device", fixture("chain10.json").to_str().unwrap(),
        "--dd", "bogus",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strategy_shape_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    train(dir.path(), "t", "0");
    let strategies = dir.path().join("t/strategies.json");
    let o = run(&[
        "bench", "--kind", "mcm-rb",
        "--device", fixture("chain10.json").to_str().unwrap(),
        "--dd", &format!("gadd:{}", strategies.display()),
        "--out", dir.path().join("b").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_theorem_reports_every_m() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["qft", "--mode", "verify-theorem", "--n", "10", "--noiseless", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("theorem.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let err: f64 = row[4].parse().unwrap();
        assert!(err <= 1e-10);
    }
}

#[test]
fn noiseless_fidelity_is_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "qft", "--mode", "fidelity", "--n", "4", "--noiseless", "--samples", "4", "--shots", "2000",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("fidelity.csv")).unwrap();
    let row = r.records().next().unwrap().unwrap();
    let f: f64 = row[2].parse().unwrap();
    assert!(f >= 0.99, "fidelity {f}");
}

fn bench_spec(kind: &str, dir: &Path) -> Value {
    let o = run(&[
        "bench", "--kind", kind,
        "--device", fixture("chain10.json").to_str().unwrap(),
        "--shots", "20", "--bootstrap", "5",
        "--out", dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fits: Value = serde_json::from_slice(&fs::read(dir.join("fits.json")).unwrap()).unwrap();
    assert!(dir.join("survival.csv").exists());
    fits["spec"].clone()
}

#[test]
fn bench_defaults_follow_the_experiment_kind() {
    let dir = tempfile::tempdir().unwrap();
    let dc = bench_spec("dc-rb-z", &dir.path().join("dc"));
    let lengths: Vec<u64> = dc["lengths"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(lengths, [0, 1, 2, 3, 4, 5, 10, 15, 20, 35]);
    assert_eq!(dc["n_randomizations"], 7);
    let mcm = bench_spec("mcm-rb", &dir.path().join("mcm"));
    let lengths: Vec<u64> = mcm["lengths"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(lengths, [2, 4, 6, 8, 10, 12]);
    assert_eq!(mcm["n_randomizations"], 60);
}
