use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lorext::space::SpaceSpec;
use lorext::verify::Scenario;
use serde_json::Value;

fn lorext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lorext")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn norm_of_unit_indicator() {
    let j = stdout_json(&lorext(&["norm", "--kind", "lorentz", "--p", "2", "--s", "2"]));
    assert_eq!(j["value"], 1.0);
}

#[test]
fn two_point_ap() {
    let dir = tempfile::tempdir().unwrap();
    let space = write(dir.path(), "two.json", r#"{"points": ["a", "b"], "dist": [[0, 1], [1, 0]], "mass": [1, 1]}"#);
    let w = write(dir.path(), "w.json", "[1, 4]");
    let j = stdout_json(&lorext(&["weight-const", "--kind", "ap", "--p", "2", "--space", &space, "--weight", &w]));
    assert_eq!(j["value"], 1.5625);
    let o = lorext(&["weight-const", "--kind", "ap", "--p", "2", "--space", &space, "--weight", &w, "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("kind,p,q,value,witness_center,witness_radius\n"));
    assert!(text.contains("1.5625000000000000e0"));
}

#[test]
fn verify_writes_report_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios_dir().join("explicit_space.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = lorext(&["verify", "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let report: Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn thread_count_env_fallback() {
    let sc = scenarios_dir().join("explicit_space.json");
    let args = ["verify", "--scenario", sc.to_str().unwrap(), "--format", "csv"];
    let plain = lorext(&args);
    let env = Command::new(env!("CARGO_BIN_EXE_lorext")).args(args).env("LOREXT_THREADS", "2").output().unwrap();
    assert_eq!(plain.stdout, env.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_lorext")).args(args).env("LOREXT_THREADS", "many").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn failing_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "tight.json",
        r#"{"id": "tight", "theorem": "identity", "space": {"interval_grid": 8},
            "weight_family": {"kind": "unit"}, "exponents": {"p": 2, "s": 2}, "slack": 0.5}"#,
    );
    assert_eq!(lorext(&["verify", "--scenario", &sc]).status.code(), Some(1));
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "bad.json",
        r#"{"theorem": "identity", "space": {"interval_grid": 8}, "weight_family": {"kind": "unit"},
            "exponents": {"p": 2, "s": 2}, "unexpected": true}"#,
    );
    let o = lorext(&["verify", "--scenario", &sc]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unexpected"));
    assert_eq!(lorext(&["norm", "--p", "0.5"]).status.code(), Some(2));
    assert_eq!(lorext(&["norm", "--space", "grid:4", "--sample", "/nonexistent.json", "--p", "2"]).status.code(), Some(2));
    assert_ne!(lorext(&["frobnicate"]).status.code(), Some(0));
}

#[test]
fn shipped_scenarios_round_trip() {
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let sc: Scenario = serde_json::from_str(&text).unwrap();
        let again: Scenario = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(sc, again, "{}", path.display());
        let space: SpaceSpec = serde_json::from_value(serde_json::to_value(&sc.space).unwrap()).unwrap();
        assert_eq!(space, sc.space);
    }
}

#[test]
fn operator_and_rearrange_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", "[1, 0, 0, 0]");
    let j = stdout_json(&lorext(&["operator", "--op", "hilbert", "--space", "grid:4", "--sample", &f]));
    let v: Vec<f64> = serde_json::from_value(j["values"].clone()).unwrap();
    assert_eq!(v[0], 0.0);
    assert!((v[1] - 1.0).abs() < 1e-15);
    let j = stdout_json(&lorext(&["rearrange", "--space", "grid:4", "--sample", &f]));
    assert_eq!(j["levels"], serde_json::json!([1.0]));
    assert_eq!(j["total"], 1.0);
    let j = stdout_json(&lorext(&["operator", "--op", "maximal", "--estimate", "--p", "2", "--space", "grid:8", "--budget", "8"]));
    let est = &j["estimate"];
    assert!(est["lower"].as_f64().unwrap() >= 1.0 - 1e-12);
    assert!(est["lower"].as_f64().unwrap() <= est["upper"].as_f64().unwrap());
}

#[test]
fn constants_and_sweeps() {
    let j = stdout_json(&lorext(&["extrapolate-const", "--formula", "k-diag", "--ap", "3", "--p", "2", "--p0", "2"]));
    assert_eq!(j["value"], 3.0);
    assert_eq!(j["branch"], "equal");
    let j = stdout_json(&lorext(&["extrapolate-const", "--formula", "gamma", "--p0", "2", "--q0", "4"]));
    assert_eq!(j["value"], 0.75);
    let o = lorext(&["sweep", "--kind", "psi", "--p", "2", "--q", "4", "--steps", "5", "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("x,ratio\n"));
    let j = stdout_json(&lorext(&["sweep", "--kind", "power-family", "--p", "2", "--space", "grid:16", "--steps", "3"]));
    assert_eq!(j.as_array().unwrap().len(), 3);
}
