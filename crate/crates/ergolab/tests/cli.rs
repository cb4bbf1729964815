use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ergolab"))
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const TV_CFG: &str = r#"{
  "experiment": "tv-rate",
  "target": {"name": "poly-tail", "r": 2.0, "k": 1.0},
  "kernel": {"name": "rwm", "eps": 1.0},
  "l": 60.0, "n_cells": 121,
  "schedule": {"lo": 2, "hi": 50, "points": 8},
  "window": [2.0, 50.0],
  "x0": 5.0,
  "label": "smoke"
}"#;

#[test]
fn tv_rate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "cfg.json", TV_CFG);
    let out = bin()
        .args(["tv-rate", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let base = dir.path().join("out/tv-rate/smoke");
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(base.join("record.json")).unwrap()).unwrap();
    assert_eq!(record["experiment"], "tv-rate");
    assert!(record["results"]["slope"]["value"].as_f64().unwrap() < 0.0);
    let curve = fs::read_to_string(base.join("tv_curve.csv")).unwrap();
    assert!(curve.starts_with("n,tv,leaked_bound\n"));
    assert_eq!(curve.lines().count(), 9);
    assert!(base.join("rate.json").exists());
}

#[test]
fn missing_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "bad.json",
        r#"{
          "experiment": "simulate",
          "target": {"name": "squared-gaussian"},
          "kernel": {"name": "rwm"},
          "x0": 0.0, "steps": 10
        }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("eps"), "stderr: {err}");
}

#[test]
fn subcommand_config_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "cfg.json", TV_CFG);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_and_thread_counts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{
          "experiment": "coupling",
          "target": {"name": "convex", "p": 2.0, "a": 1.0},
          "eps": 1.0, "n": 5, "trials": 5000,
          "x0s": [5.0, 20.0],
          "seed": 3,
          "label": "det"
        }"#,
    );
    let mut artifacts: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for (i, threads) in ["1", "1", "4"].iter().enumerate() {
        let out_dir = dir.path().join(format!("out{i}"));
        let out = bin()
            .args(["coupling", "--threads", threads, "--config"])
            .arg(&cfg)
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let base = out_dir.join("coupling/det");
        let csv = fs::read(base.join("coupling.csv")).unwrap();
        let mut record: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(base.join("record.json")).unwrap()).unwrap();
        // wall clock is the one legitimately varying field
        record["wall_clock_s"] = serde_json::json!(0);
        artifacts.push((csv, serde_json::to_vec(&record).unwrap()));
    }
    assert_eq!(artifacts[0], artifacts[1], "identical rerun differs");
    assert_eq!(artifacts[0], artifacts[2], "thread count changes artifacts");
}

#[test]
fn set_overrides_and_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{
          "experiment": "simulate",
          "target": {"name": "convex", "p": 2.0, "a": 1.0},
          "kernel": {"name": "rwm", "eps": 1.0},
          "x0": 0.0, "steps": 200
        }"#,
    );
    let out = bin()
        .args(["simulate", "--seed", "9", "--set", "kernel.eps=0.5", "--set", "label=ov", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let base = dir.path().join("out/simulate/ov");
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(base.join("record.json")).unwrap()).unwrap();
    assert_eq!(record["seed"], 9);
    assert_eq!(record["config"]["kernel"]["eps"], 0.5);
    let traj = fs::read_to_string(base.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 202);
    // unknown key injected via --set is still rejected
    let out2 = bin()
        .args(["simulate", "--set", "bogus=1", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(out2.status.code(), Some(2));
}
