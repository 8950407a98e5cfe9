//! End-to-end tests of the binary: exit codes, CSV/SVG emission, config
//! round trips, and bit-identical reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_shadow-ode")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("SHADOW_ODE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn tempdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shadow-ode-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn solve_blowup_summary_and_artifacts() {
    let dir = tempdir("solve");
    let csv = dir.join("sol.csv");
    let svg = dir.join("sol.svg");
    let out = run(&[
        "solve",
        "--field",
        "y*y",
        "--y0",
        "1",
        "--tmax",
        "2",
        "--out",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is one JSON line");
    assert_eq!(summary["blow_up"], true);
    let a_est = summary["a_est"].as_f64().unwrap();
    assert!((a_est - 1.0).abs() < 0.01, "a_est = {a_est}");

    let csv_text = read(&csv);
    let mut lines = csv_text.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["blow_up"], true);
    assert_eq!(lines.next().unwrap(), "q,y0,err_est");

    let svg_text = read(&svg);
    assert!(svg_text.starts_with("<svg"));
    assert!(svg_text.contains("<polyline"));
    assert!(svg_text.contains("zero"), "legend carries the rule");
}

#[test]
fn integrate_value() {
    let out = run(&[
        "integrate",
        "--f",
        "sin(x)",
        "--a",
        "0",
        "--b",
        "3.14159265358979",
        "--tol",
        "1e-3",
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let v = summary["value"].as_f64().unwrap();
    assert!((v - 2.0).abs() <= 1e-3, "value = {v}");
}

#[test]
fn config_round_trip_is_bit_identical() {
    let dir = tempdir("config");
    let cfg = dir.join("run.json");
    let out1 = dir.join("a.csv");
    let out2 = dir.join("b.csv");

    let first = run(&[
        "solve",
        "--field",
        "y*y",
        "--y0",
        "1",
        "--tmax",
        "2",
        "--n0",
        "512",
        "--refinements",
        "6",
        "--out",
        out1.to_str().unwrap(),
        "--dump-config",
        cfg.to_str().unwrap(),
    ]);
    assert!(first.status.success());

    // second run from the dumped config; only the output path differs
    let second = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(second.status.success(), "stderr: {}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(read(&out1), read(&out2), "config replay altered the output");
    assert_eq!(first.stdout, second.stdout, "summaries differ");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempdir("determinism");
    let out1 = dir.join("a.csv");
    let out2 = dir.join("b.csv");
    let args = |out: &Path| {
        vec![
            "solve".to_string(),
            "--field".into(),
            "y1; -y0".into(),
            "--dim".into(),
            "2".into(),
            "--y0".into(),
            "1,0".into(),
            "--tmax".into(),
            "6.2832".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let a = Command::new(bin()).args(args(&out1)).output().unwrap();
    let b = Command::new(bin()).args(args(&out2)).output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(read(&out1), read(&out2));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn funnel_emits_long_csv() {
    let dir = tempdir("funnel");
    let csv = dir.join("funnel.csConfig");
    let out = run(&[
        "funnel",
        "--field",
        "2*sqrt(abs(y))",
        "--y0",
        "0",
        "--tmax",
        "1",
        "--n0",
        "512",
        "--refinements",
        "5",
        "--pert",
        "zero",
        "--pert",
        "const:1e-3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = read(&csv);
    assert!(text.starts_with("solution,rule,q,y0,err_est"));
    assert!(text.contains("const:0.001"));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["solutions"], 2);
}

#[test]
fn validation_errors_exit_2() {
    // syntax error in the field
    let out = run(&["solve", "--field", "2x", "--y0", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("syntax error"), "stderr: {msg}");

    // dimension mismatch between y0 and --dim
    let out = run(&["solve", "--field", "y0;y1", "--dim", "2", "--y0", "1"]);
    assert_eq!(out.status.code(), Some(2));

    // bad N0
    let out = run(&["solve", "--field", "0", "--y0", "0", "--n0", "1000"]);
    assert_eq!(out.status.code(), Some(2));

    // recover for systems is unsupported
    let out = run(&[
        "recover",
        "--field",
        "y1; -y0",
        "--dim",
        "2",
        "--y0",
        "1,0",
        "--known",
        "cos(x); -sin(x)",
        "--known-prime",
        "-sin(x); -cos(x)",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_3() {
    // an oscillating integrand cannot be certified under a tiny tolerance
    // before the refinement cap
    let out = run(&[
        "integrate",
        "--f",
        "abs(sin(1000000*x))",
        "--a",
        "0",
        "--b",
        "1",
        "--tol",
        "1e-13",
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn domain_errors_exit_4() {
    let out = run(&[
        "integrate",
        "--f",
        "log(x-10)",
        "--a",
        "0",
        "--b",
        "1",
        "--tol",
        "1e-3",
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn check_reports_certificate() {
    let out = run(&["check", "--field", "y", "--y0", "1", "--tmax", "1", "--anchor", "0.25"]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["satisfied"], true);
    assert!(summary["m"].as_f64().unwrap() > 0.0);
}

#[test]
fn recover_csv_schema() {
    let dir = tempdir("recover");
    let csv = dir.join("eps.csv");
    let out = run(&[
        "recover",
        "--field",
        "y",
        "--y0",
        "1",
        "--n0",
        "1024",
        "--tmax",
        "1",
        "--known",
        "exp(x)",
        "--known-prime",
        "exp(x)",
        "--known-c",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = read(&csv);
    assert!(text.starts_with("k,x,t,eps\n"));
    assert_eq!(text.lines().count(), 1025);
}

#[test]
fn flags_override_config() {
    let dir = tempdir("override");
    let cfg = dir.join("cfg.json");
    let first = run(&[
        "solve",
        "--field",
        "y",
        "--y0",
        "1",
        "--tmax",
        "1",
        "--dump-config",
        cfg.to_str().unwrap(),
    ]);
    assert!(first.status.success());
    // override tmax on top of the config
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--tmax",
        "0.5",
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // horizon 0.5 at spacing 2^-7 gives 65 samples
    assert_eq!(summary["samples"], 65);

    // config from another command is rejected
    let out = run(&["osgood", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
