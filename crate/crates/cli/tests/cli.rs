use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lbb_core::bench::synthetic_posterior;
use serde_json::Value;

fn lbb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbb")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = lbb(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn tensor_file(dir: &Path) -> String {
    let path = dir.join("pool.bin");
    synthetic_posterior(40, 4, 3, 5).unwrap().save(&path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn select_writes_selection_manifest_and_timing_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = tensor_file(dir.path());
    let out = dir.path().join("sel.json");
    ok(&["select", "--tensor", &tensor, "--strategy", "lbb", "--batch", "5", "--seed", "3", "--out", out.to_str().unwrap()]);

    let sel = json(&out);
    assert_eq!(sel["strategy"], "lbb");
    assert_eq!(sel["indices"].as_array().unwrap().len(), 5);
    assert_eq!(sel["gains"].as_array().unwrap().len(), 5);
    assert!(sel.get("wall_time_s").is_none());
    assert!(json(&dir.path().join("sel.timings.json"))["wall_time_s"].is_number());

    let manifest = json(&dir.path().join("sel.manifest.json"));
    assert_eq!(manifest["command"], "select");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"], serde_json::json!(["sel.json"]));
}

#[test]
fn score_writes_one_csv_per_score() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = tensor_file(dir.path());
    let out = dir.path().join("run");
    ok(&["score", "--tensor", &tensor, "--scores", "entropy,bald", "--mean", "--out", out.to_str().unwrap()]);
    for name in ["scores_topk-entropy.csv", "scores_bald.csv", "mean.csv", "manifest.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let bald = fs::read_to_string(out.join("scores_bald.csv")).unwrap();
    assert_eq!(bald.lines().count(), 41);
}

#[test]
fn simulate_summary_has_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    fs::write(
        &cfg,
        r#"{
            "dataset": {"kind": "blobs", "classes": 2, "dims": 2, "per_class": 20, "test_per_class": 20, "seed": 1},
            "model": {"members": 2, "epochs": 30},
            "strategy": {"strategy": "bald"},
            "initial": 2, "batch": 4, "budget": 10, "seeds": [0, 1]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "round,labeled,accuracy_mean,accuracy_std");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("2,10,"));
    let records = fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 6);
    assert!(json(&out.join("manifest.json"))["timing_outputs"]
        .as_array()
        .unwrap()
        .contains(&Value::from("timings.jsonl")));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let out = lbb(&["select", "--tensor", missing.to_str().unwrap(), "--strategy", "bald", "--batch", "2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.bin"));

    let tensor = tensor_file(dir.path());
    let out = lbb(&["select", "--tensor", &tensor, "--strategy", "lbb", "--batch", "41", "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    // top-k hands back the whole pool and flags it instead
    let whole = dir.path().join("all.json");
    ok(&["select", "--tensor", &tensor, "--strategy", "bald", "--batch", "41", "--out", whole.to_str().unwrap()]);
    let sel = json(&whole);
    assert_eq!(sel["indices"].as_array().unwrap().len(), 40);
    assert!(!sel["flags"].as_array().unwrap().is_empty());

    let out = lbb(&["simulate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));

    let garbage = dir.path().join("garbage.bin");
    fs::write(&garbage, b"not a tensor").unwrap();
    let out = lbb(&["score", "--tensor", garbage.to_str().unwrap(), "--out", dir.path().join("y").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn profile_from_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("errors.csv");
    fs::write(&table, "problem,solver,error\np1,a,0.1\np1,b,0.2\np2,a,0.4\np2,b,0.2\n").unwrap();
    let out = dir.path().join("prof");
    ok(&["profile", "--table", table.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let p = json(&out.join("profile.json"));
    assert_eq!(p["solvers"], serde_json::json!(["a", "b"]));
    assert!(out.join("profile.svg").is_file());
}
