use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_pwmcert");

fn config(sigma_star: f64) -> String {
    format!(
        r#"{{
  "power_stage": {{"R": 22.0, "C0": 4.7e-5, "L": 0.02, "Vs": 20.0}},
  "control": {{"variant": "Proportional", "a": 1.0, "Vref": 13.5}},
  "ramp": {{"sigma1": 4.0, "sigma_star": {sigma_star}, "T": 4e-4}}
}}"#
    )
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_certifies_at_18() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(18.0));
    let out = dir.path().join("r.json");
    let o = run(&["analyze", "--config", arg(&cfg), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let duty = v["modes"][0]["duty"].as_f64().unwrap();
    let mean = v["modes"][0]["mean_output_v"].as_f64().unwrap();
    assert!((0.25..=0.30).contains(&duty), "{duty}");
    assert!((mean - 5.0).abs() < 0.1, "{mean}");
    assert_eq!(v["simulation"]["converged"], true);
    assert_eq!(v["theorem2"]["feasible"], true);
}

#[test]
fn analyze_below_threshold_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(12.0));
    let o = run(&["analyze", "--config", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("existence certified: no"), "{err}");
    assert!(err.contains("not certified"), "{err}");
}

#[test]
fn missing_period_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(18.0).replace(r#", "T": 4e-4"#, ""));
    let o = run(&["analyze", "--config", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ramp") && err.contains("`T`"), "{err}");
}

#[test]
fn unreadable_config_is_input_error() {
    let o = run(&["modes", "--config", "/nonexistent/c.json"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(20.0));
    let a = run(&["analyze", "--config", arg(&cfg), "--seed", "7", "--periods", "20"]);
    let b = run(&["analyze", "--config", arg(&cfg), "--seed", "7", "--periods", "20"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["options_effective"]["lmi"]["solver"]["seed"], 7);
    assert_eq!(v["options_effective"]["simulation"]["periods"], 20);
}

#[test]
fn sweep_existence_and_empty_range() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(18.0));
    let o = run(&[
        "sweep", "--config", arg(&cfg), "--param", "sigma-star", "--min", "10", "--max", "20", "--target", "existence",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let th = v["threshold_v"].as_f64().unwrap();
    assert!((th - 12.83).abs() <= 0.1, "{th}");

    let o = run(&["sweep", "--config", arg(&cfg), "--min", "20", "--max", "10", "--target", "existence"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_without_bracket_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(18.0));
    let o = run(&["sweep", "--config", arg(&cfg), "--min", "5", "--max", "8", "--target", "existence"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(18.0));
    let csv = dir.path().join("t.csv");
    let o = run(&["simulate", "--config", arg(&cfg), "--periods", "1", "--x0", "mode", "--out", arg(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x_1,x_2,sigma,f,period_index");
    assert_eq!(text.lines().count(), 257);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["periods"], 1);

    let o = run(&["simulate", "--config", arg(&cfg), "--x0", "1,2,3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn modes_listing() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(18.0));
    let o = run(&["modes", "--config", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);

    let cfg = write(&dir, "big.json", &config(1000.0));
    let o = run(&["modes", "--config", arg(&cfg)]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let duty = rows[0]["duty"].as_f64().unwrap();
    assert!(duty < 0.02, "{duty}");
    assert!(rows[0]["mean_output_v"].as_f64().unwrap() < 0.5);

    // psi below sigma1: no mode
    let cfg = write(&dir, "low.json", &config(18.0).replace(r#""Vref": 13.5"#, r#""Vref": 3.0"#));
    let o = run(&["modes", "--config", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rows.as_array().unwrap().is_empty());
}
