//! Smoke tests for the `byzfloor` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn byzfloor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzfloor"))
        .args(args)
        .env("BYZFLOOR_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn run_writes_trace_summary_and_config_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("hetero");
    let cfg = configs().join("hetero_floor.txt");
    let out = byzfloor(&["run", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--emit-plot-data"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("t,grad_norm_sq,f_gap,dist_to_ref,lyapunov,gamma,beta"));
    assert!(lines.count() >= 2000);
    assert_eq!(fs::read_to_string(dir.join("hetero_floor.txt")).unwrap(), fs::read_to_string(&cfg).unwrap());

    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let floor = summary["floor_estimate"].as_f64().unwrap();
    assert!((floor - 0.0335621).abs() < 1e-4, "floor {floor}");
}

#[test]
fn verify_fast_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let json = tmp.path().join("verify.json");
    let out = byzfloor(&["verify", "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let rows: Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["passed"] == Value::Bool(true)));
}

#[test]
fn certify_reports_holding_certificate() {
    let out = byzfloor(&["certify", "--instance", "hetero", "--G", "1", "--B", "0.5"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["holds"], Value::Bool(true));
    assert!(v["minimal_G"].as_f64().unwrap() <= 1.0 + 1e-9);

    // A config instance built with G = 1, B = 0.5 cannot satisfy a tighter pair.
    let cfg = configs().join("hetero_floor.txt");
    let bad = byzfloor(&["certify", "--instance", cfg.to_str().unwrap(), "--G", "0.1", "--B", "0.1"]);
    assert_eq!(bad.status.code(), Some(3));
    let v = stdout_json(&bad);
    assert_eq!(v["holds"], Value::Bool(false));
    assert_eq!(v["certificate"]["verdict"], "fail");
}

#[test]
fn estimate_kappa_prints_json() {
    let out = byzfloor(&["estimate-kappa", "--rule", "cwtm", "--n", "10", "--b", "2", "--samples", "200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["n"], 10);
    assert_eq!(v["b"], 2);
    assert!(v["kappa_hat"].as_f64().unwrap().is_finite());
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.txt");
    fs::write(&cfg, "problem.typo = 1\n").unwrap();
    let out = byzfloor(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.typo"));
}

#[test]
fn divergence_exits_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("diverge.txt");
    fs::write(
        &cfg,
        "problem.kind = hetero_lower_bound\nproblem.B = 0.5\naggregator.rule = average\nschedule.gamma = 50\nrun.iterations = 2000\nrun.x0 = 1\n",
    )
    .unwrap();
    let out = byzfloor(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_file_exits_with_code_one() {
    let out = byzfloor(&["run", "/nonexistent/config.txt", "--out", "/tmp/unused-byzfloor"]);
    assert_eq!(out.status.code(), Some(1));
}
