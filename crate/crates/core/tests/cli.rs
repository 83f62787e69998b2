use std::fs;
use std::process::Command;

fn crn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crn"))
}

#[test]
fn select_train_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"selection": {"complexity": 12}, "schedule": {"t_learn": 4}}"#).unwrap();
    for cmd in ["select", "train", "infer"] {
        let out = crn()
            .args([cmd, "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let sel: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["subsets"].as_array().unwrap().len(), 12);
    let preds = fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 361);
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn sweep_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"grid": [4, 16], "repetitions": 2}"#).unwrap();
    let out = crn()
        .args(["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .env("CRN_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let curve = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    let raw = fs::read_to_string(dir.path().join("sweep_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 5);
}

#[test]
fn invalid_config_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"rates": {"s0": 1.0}}"#).unwrap();
    let out = crn().args(["select", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_model_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = crn().args(["infer", "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quick_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = crn().args(["verify", "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(fs::read_to_string(dir.path().join("bounds.csv")).unwrap().contains("not_instantiated"));
}
