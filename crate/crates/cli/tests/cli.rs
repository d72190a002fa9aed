use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entangled"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("entangled-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn generate_then_run_writes_outputs() {
    let dir = scratch("gen");
    let scenario = dir.join("s.json");
    let out = run(&["generate", "--seed", "3", "--profile", "random-kernel", "--out", scenario.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report = dir.join("report");
    let out = run(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--suite",
        "validate,decompose,identities,t1,sparse",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    for f in ["report.json", "constants.csv", "certificates.csv"] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let json = fs::read_to_string(report.join("report.json")).unwrap();
    assert!(json.contains("\"schema_version\": 1"));
    assert!(json.contains("\"seed\": 3"));
}

#[test]
fn generate_is_deterministic() {
    let a = run(&["generate", "--seed", "17", "--profile", "spike", "--sizes", "2,1", "--partial"]);
    let b = run(&["generate", "--seed", "17", "--profile", "spike", "--sizes", "2,1", "--partial"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["generate", "--seed", "18", "--profile", "spike", "--sizes", "2,1", "--partial"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn run_output_is_reproducible() {
    let dir = scratch("repro");
    let scenario = dir.join("s.json");
    assert!(run(&["generate", "--seed", "5", "--out", scenario.to_str().unwrap()]).status.success());
    let args = ["run", "--scenario", scenario.to_str().unwrap(), "--engine", "both", "--width", "1/1000000"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", text(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(text(&a.stdout).contains("\"width\": \"1/1000000\""));
}

#[test]
fn failed_certificate_exits_one() {
    let dir = scratch("fail");
    let scenario = dir.join("bad.json");
    fs::write(
        &scenario,
        r#"{"schema_version": 1,
 "model": {"r": 2, "top": 0, "fine": 1},
 "hypergraph": {"complete": [2, 1]},
 "kernel": {"type": "cells", "cells": [{"cell": [0, 3, 0], "value": "1"}]},
 "functions": {"*": {"type": "constant", "value": "1"}}}"#,
    )
    .unwrap();
    let out = run(&["validate", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("kernel-perfect"));
}

#[test]
fn bad_input_exits_two() {
    let dir = scratch("err");
    let scenario = dir.join("broken.json");
    fs::write(&scenario, r#"{"schema_version": 1, "model": {"r": "2"}}"#).unwrap();
    let out = run(&["validate", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("model.r") && err.contains("line 1"), "{err}");

    let missing = run(&["run", "--scenario", dir.join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let good = dir.join("good.json");
    assert!(run(&["generate", "--out", good.to_str().unwrap()]).status.success());
    let suite = run(&["run", "--scenario", good.to_str().unwrap(), "--suite", "bogus"]);
    assert_eq!(suite.status.code(), Some(2));
    let profile = run(&["generate", "--profile", "bogus"]);
    assert_eq!(profile.status.code(), Some(2));
}

#[test]
fn bench_reports_timings() {
    let out = run(&["bench", "--fine", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let err = text(&out.stderr);
    assert!(err.contains("form-naive") && err.contains("form-factorized"), "{err}");
    assert!(text(&out.stdout).contains("\"runtimes\""));
}
