mod common;

use std::process::Command;

use common::*;
use serde_json::Value;

fn incubator() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_incubator"));
    cmd.env_remove("INCUBATOR_BUS_ADDR").env_remove("INCUBATOR_RUNS_DIR").env_remove("INCUBATOR_GATEWAY_BIND");
    cmd
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = incubator().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn calibrate_prints_the_fit_as_json() {
    let dir = tempfile::tempdir().unwrap();
    write_recording(dir.path(), &heating_run(1000.0, 600, 1200.0, 0.0));
    let csv = dir.path().join("fit.csv");
    let out = incubator()
        .args(["calibrate", "--model", "a", "--input"])
        .arg(dir.path())
        .arg("--csv")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_samples"], 600);
    assert_eq!(v["converged"], true);
    assert!(v["params"]["c_air"].as_f64().unwrap() > 0.0);
    let rows = std::fs::read_to_string(csv).unwrap();
    assert_eq!(rows.lines().count(), 601);
}

#[test]
fn calibrate_reports_missing_input() {
    let out = incubator().args(["calibrate", "--model", "b", "--input", "/nonexistent/run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn whatif_evaluates_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, r#"{"initial": {"t_bair": 21.0, "t_heater": 21.0}, "horizon": 1200}"#).unwrap();
    let out = incubator().args(["whatif", "--scenario"]).arg(&scenario).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ok"], true);
    assert_eq!(v["results"].as_array().unwrap().len(), 1);
}

#[test]
fn demo_runs_to_its_duration_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = incubator()
        .args(["--bus", "127.0.0.1:0", "demo", "--time-scale", "0.001", "--duration", "300", "--sigma", "0", "--no-gateway"])
        .arg("--runs-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    // 101 samples, each answered by a command and an estimate, plus controller and orchestrator states
    assert!(v["messages_recorded"].as_u64().unwrap() >= 303, "{v}");
    let run = std::path::PathBuf::from(v["run_dir"].as_str().unwrap());
    assert!(run.join("incubator_driver_state.jsonl").exists());
}
