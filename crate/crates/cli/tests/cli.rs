use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn minsurf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minsurf")).args(args).current_dir(cwd).env_remove("MINSURF_OUT").output().expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn missing_reconstruction_data_is_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = minsurf(&["reconstruct", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error"]["kind"], "input");
    assert_eq!(diag["exit"], 3);
}

#[test]
fn garbage_reconstruction_data_is_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"n\": 5, \"m\": ").unwrap();
    assert_eq!(minsurf(&["reconstruct", "bad.json"], dir.path()).status.code(), Some(3));
}

#[test]
fn usage_errors_do_not_collide_with_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(minsurf(&["--no-such-flag"], dir.path()).status.code(), Some(1));
    assert_eq!(minsurf(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(minsurf(&["analyze", "--gallery", "no_such_surface"], dir.path()).status.code(), Some(1));
}

#[test]
fn verify_passes_on_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let out = minsurf(&["--res", "64", "verify"], dir.path());
    let report = json_stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{report}");
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() > 20);
}

#[test]
fn analyze_clifford_torus() {
    let dir = tempfile::tempdir().unwrap();
    let out = minsurf(&["--res", "32", "analyze", "--gallery", "clifford_s3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = json_stdout(&out);
    assert_eq!(r["schema"], "1");
    assert!(f(&r["curvature"]["max"]).abs() < 1e-10);
    assert!(f(&r["curvature"]["min"]).abs() < 1e-10);
    assert!((f(&r["levels"][0]["a_plus"]["mean"]) - 1.0).abs() < 1e-10);
}

#[test]
fn emitted_samples_analyze_like_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    for enc in ["csv", "f64le"] {
        let sub = dir.path().join(enc);
        let out = minsurf(
            &["--res", "32", "--out", sub.to_str().unwrap(), "gallery", "emit", "generalized_clifford_s5", "--encoding", enc],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0));
        let header = sub.join("generalized_clifford_s5.json");
        let sampled = minsurf(&["classify", "--input", header.to_str().unwrap()], dir.path());
        assert_eq!(sampled.status.code(), Some(0), "{}", String::from_utf8_lossy(&sampled.stderr));
        let c = json_stdout(&sampled);
        assert_eq!(c["classification"]["exceptional"], "pass");
        assert_eq!(c["classification"]["superconformal"], "fail");
        for e in c["theorem2"]["entries"].as_array().unwrap() {
            assert!(f(&e["stat"]["max_rel"]) < 1e-6, "{e}");
        }
    }
}

#[test]
fn output_is_deterministic_and_written_to_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--res", "32", "--out", "o", "classify", "--gallery", "equilateral_torus_s5"];
    let a = minsurf(&args, dir.path());
    let b = minsurf(&args, dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let file = std::fs::read(dir.path().join("o/equilateral_torus_s5_classify.json")).unwrap();
    assert_eq!(file, a.stdout);
}

#[test]
fn reconstruct_from_gallery_and_from_written_data() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        minsurf(&["--res", "32", "--out", "o", "reconstruct", "--gallery", "generalized_clifford_s5", "--theta", "1=0.3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json_stdout(&out);
    assert_eq!(r["parameter_count"], 2);
    assert!(f(&r["diagnostics"]["flatness"]) < 1e-8);
    assert!((f(&r["theta"][1]) - 0.3).abs() < 1e-15);
    let again = minsurf(&["reconstruct", "o/generalized_clifford_s5_reconstruct_data.json"], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(json_stdout(&again)["diagnostics"], r["diagnostics"]);
    assert!(dir.path().join("o/generalized_clifford_s5_reconstructed.json").exists());
}

#[test]
fn tolerance_overrides_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = minsurf(&["--tol", "pde", "--res", "32", "analyze", "--gallery", "clifford_s3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = minsurf(&["--tol", "pde=1e-4", "--res", "32", "analyze", "--gallery", "clifford_s3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}
