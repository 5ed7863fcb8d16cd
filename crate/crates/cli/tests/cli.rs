use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ura(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ura")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, "K_a = 6\nM = 8\nL = 2\nJ = 8\nn0 = 128\nseed = 5\n").unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn trial_writes_traces_assignment_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = ura(&["trial", "--config", &cfg, "--out", out.to_str().unwrap(), "--trials", "2", "--parallel", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["codebook.bin", "trace_slot0.csv", "trace_slot1.csv", "assignment.csv", "metrics.json", "trials.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let trace = fs::read_to_string(out.join("trace_slot0.csv")).unwrap();
    assert!(trace.lines().next().unwrap().starts_with("t,u,v"));
    let assignment = fs::read_to_string(out.join("assignment.csv")).unwrap();
    assert_eq!(assignment.lines().next().unwrap(), "slot,codeword,class,margin");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["trial_seeds"].as_array().unwrap().len(), 2);
    assert!(manifest["codebook"].is_object());
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|v| v == "assignment.csv"));
}

#[test]
fn seed_flag_reproduces_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let metrics = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = ura(&["trial", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        fs::read_to_string(out.join("metrics.json")).unwrap()
    };
    assert_eq!(metrics("a", "9"), metrics("b", "9"));
    assert_ne!(metrics("a", "9"), metrics("c", "10"));
}

#[test]
fn sweep_and_theory_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    let o = ura(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--trials", "2", "--values", "0,20", "--mode", "matching"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 3);

    let out = dir.path().join("theory");
    let o = ura(&["theory", "--out", out.to_str().unwrap(), "--antennas", "16,64", "--ratios", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("theory.csv")).unwrap().lines().count(), 3);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn bad_input_exits_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    let missing = dir.path().join("none.toml");
    for args in [
        vec!["trial", "--config", missing.to_str().unwrap(), "--out", out],
        vec!["trial", "--mode", "sideways", "--out", out],
        vec!["figure", "nonexistent", "--out", out],
        vec!["sweep", "--axis", "colour", "--values", "1", "--out", out],
    ] {
        let o = ura(&args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"), "{args:?}");
    }
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "K_a = 6\nM = 8\nL = 2\nJ = 8\nn0 = 128\nb = 3\n").unwrap();
    let o = ura(&["trial", "--config", bad.to_str().unwrap(), "--out", out]);
    assert!(!o.status.success());
}
