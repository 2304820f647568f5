use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_respctx"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A two-minute-per-activity session; returns its manifest path.
fn small_session(dir: &Path, seed: u64) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, "segment_s = 120.0\ncycles = 1\n").unwrap();
    let out = dir.join(format!("session{seed}"));
    let seed = seed.to_string();
    ok(&["synth", "--config", s(&cfg), "--seed", &seed, "--out", s(&out)]);
    out.join("manifest.toml")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("not JSON: {text} ({e})"));
    assert!(v["error"]["message"].is_string());
    v
}

#[test]
fn synth_features_train_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_session(tmp.path(), 1);
    let feats = tmp.path().join("features");
    ok(&["features", "--manifest", s(&m), "--out", s(&feats)]);
    let csv = read(&feats.join("features.csv"));
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 3 + 90 + 20 + 2);
    assert!(csv.lines().count() > 100);

    let models = tmp.path().join("models");
    ok(&["train", "--manifest", s(&m), "--model", "glm", "--out", s(&models)]);
    let bundle: Value = serde_json::from_str(&read(&models.join("models.json"))).unwrap();
    assert_eq!(bundle["banks"].as_array().unwrap().len(), 2);

    let eval = tmp.path().join("eval");
    ok(&["eval", "--manifest", s(&m), "--model", "all", "--ratio", "0.7", "--out", s(&eval)]);
    let metrics: Value = serde_json::from_str(&read(&eval.join("metrics.json"))).unwrap();
    let ratios = metrics["ratios"].as_array().unwrap();
    assert_eq!(ratios.len(), 1);
    for target in ["br", "ve"] {
        for kind in ["glm", "rf", "svm", "gpr", "nca"] {
            let mm = &ratios[0]["models"][target][kind];
            assert!(mm["overall_mae"].as_f64().unwrap() >= 0.0);
            assert!(mm["agnostic_mae"].is_number());
            let per = mm["per_context_mae"].as_object().unwrap();
            assert_eq!(per.len(), 5);
            assert!(per.values().all(Value::is_number), "{target}/{kind}: {per:?}");
        }
    }
    let confusion = read(&eval.join("confusion.csv"));
    assert_eq!(confusion.lines().count(), 1 + 5);
    let preds = read(&eval.join("predictions.csv"));
    assert!(preds.starts_with("train_ratio,target,model,t_center_ms,true_context,predicted_context,p_rest"));
    let prov: Value = serde_json::from_str(&read(&eval.join("provenance.eval.json"))).unwrap();
    assert_eq!(prov["seed"], 42);
    assert_eq!(prov["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(prov["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_has_seven_ratios_and_report_renders() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_session(tmp.path(), 2);
    let eval = tmp.path().join("eval");
    ok(&["eval", "--manifest", s(&m), "--model", "glm", "--sweep", "--out", s(&eval)]);
    let metrics: Value = serde_json::from_str(&read(&eval.join("metrics.json"))).unwrap();
    let ratios: Vec<f64> = metrics["ratios"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["train_ratio"].as_f64().unwrap())
        .collect();
    assert_eq!(ratios, vec![0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2]);
    let out = ok(&["report", "--input", s(&eval)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("20/80"));
    assert_eq!(text, read(&eval.join("report.txt")));
}

#[test]
fn rank_emits_every_target_and_context() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_session(tmp.path(), 3);
    let out = tmp.path().join("rank");
    ok(&["rank", "--manifest", s(&m), "--out", s(&out)]);
    let csv = read(&out.join("relevance.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "target,context,Rh,Rw,Th,Tw,RR");
    assert_eq!(lines.len(), 1 + 2 * 5);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').skip(2).map(|c| c.parse().unwrap()).collect();
        assert_eq!(v.len(), 5);
        assert!((v.iter().sum::<f64>() - 100.0).abs() < 1e-4);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_session(tmp.path(), 4);
    let mut hashes = Vec::new();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["eval", "--manifest", s(&m), "--model", "nca", "--ratio", "0.6", "--seed", "9", "--out", s(dir)]);
        ok(&["rank", "--manifest", s(&m), "--model", "gpr", "--seed", "9", "--out", s(dir)]);
        ok(&["features", "--manifest", s(&m), "--out", s(dir)]);
        let prov: Value = serde_json::from_str(&read(&dir.join("provenance.eval.json"))).unwrap();
        hashes.push(prov["config_hash"].clone());
    }
    for f in ["metrics.json", "predictions.csv", "confusion.csv", "relevance.csv", "features.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn synth_is_reproducible_from_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = small_session(&tmp.path().join("x"), 5);
    let b = small_session(&tmp.path().join("y"), 5);
    for f in ["ecg.csv", "imu.csv", "resp.csv", "labels.csv", "truth.json"] {
        let pa = a.parent().unwrap().join(f);
        let pb = b.parent().unwrap().join(f);
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{f}");
    }
}

#[test]
fn failures_report_json_and_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.toml");
    let out = run(&["eval", "--manifest", s(&missing), "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert_eq!(stderr_error(&out)["error"]["code"], "data");

    let m = small_session(tmp.path(), 6);
    let out = run(&["eval", "--manifest", s(&m), "--ratio", "0.95", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert_eq!(stderr_error(&out)["error"]["code"], "usage");

    let out = run(&["eval", "--manifest", s(&m), "--model", "rf", "--ratio", "0.2", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert_eq!(stderr_error(&out)["error"]["code"], "pipeline");

    let out = run(&["rank", "--manifest", s(&m), "--model", "svm", "--out", s(tmp.path())]);
    assert!(!out.status.success());

    let out = run(&["eval", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"]["code"], "usage");
}
