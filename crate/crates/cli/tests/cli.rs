use std::path::Path;
use std::process::{Command, Output};

fn monoalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monoalign"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = monoalign(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn synth_train_audit_and_small_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = |rel: &str| s(&dir.path().join(rel));
    ok(&["synth", "--n", "1500", "--seed", "4", "--out", &d("data")]);
    for f in ["data.csv", "train.csv", "test.csv", "schema.json", "survey.csv", "truth.json", "manifests/synth.json"] {
        assert!(dir.path().join("data").join(f).exists(), "{f}");
    }

    ok(&[
        "train", "--data", &d("data/train.csv"), "--schema", &d("data/schema.json"), "--constraints",
        &d("data/survey.csv"), "--rounds", "30", "--out", &d("m"),
    ]);
    let cv: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m/cv.json")).unwrap()).unwrap();
    assert_eq!(cv["cells"].as_array().unwrap().len(), 4);

    let stdout = ok(&[
        "audit", "--model", &d("m/model.json"), "--data", &d("data/test.csv"), "--schema", &d("data/schema.json"),
        "--feature", "stage", "--out", &d("audit"),
    ]);
    assert!(stdout.contains("stage: 0 PDP violation(s), 0 margin-scan violation(s)"), "{stdout}");
    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("audit/audit.json")).unwrap()).unwrap();
    assert_eq!(audit[0]["pdp_violations"].as_array().unwrap().len(), 0);
    assert!(dir.path().join("audit/pdp.csv").exists());
    assert!(dir.path().join("audit/pdp_stage.svg").exists());

    ok(&[
        "sweep", "--train", &d("data/train.csv"), "--test", &d("data/test.csv"), "--schema", &d("data/schema.json"),
        "--constraints", &d("data/truth.json"), "--sizes", "100,200", "--seeds", "5", "--learning-rates", "0.3",
        "--rounds", "20", "--depths", "2", "--out", &d("sweep"),
    ]);
    let models = std::fs::read_dir(dir.path().join("sweep/models")).unwrap().count();
    assert_eq!(models, 20);
    for f in ["curve_auc_roc.svg", "curve_avg_precision.svg", "curve_distance.svg", "records.csv", "pairs.csv"] {
        assert!(dir.path().join("sweep").join(f).exists(), "{f}");
    }
}

#[test]
fn unknown_flag_is_rejected() {
    let out = monoalign(&["train", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
}

#[test]
fn missing_input_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = monoalign(&[
        "train", "--data", "/nonexistent/train.csv", "--schema", "/nonexistent/schema.json", "--out",
        &s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/schema.json"));
}

#[test]
fn conflicting_response_sources_are_rejected() {
    let out = monoalign(&["exp-analyze", "--responses", "a.jsonl", "--log", "b.jsonl", "--bundle", "x", "--out", "y"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot be used with"));
}

#[test]
fn infeasible_grid_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = |rel: &str| s(&dir.path().join(rel));
    ok(&["synth", "--n", "200", "--out", &d("data")]);
    let out = monoalign(&[
        "train", "--data", &d("data/train.csv"), "--schema", &d("data/schema.json"), "--learning-rates", "0",
        "--out", &d("m"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning rates must be positive"));
}
