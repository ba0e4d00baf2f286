use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tversky(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tversky")).args(args).output().unwrap()
}

fn error_line(out: &Output) -> Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let line = stderr.lines().last().unwrap();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_are_one_json_line() {
    let e = error_line(&tversky(&["no-such-command"]));
    assert_eq!(e["error"], "usage");
    let e = error_line(&tversky(&["boundary", "--resolution", "many"]));
    assert_eq!(e["error"], "usage");
}

#[test]
fn help_and_version_succeed() {
    assert!(tversky(&["--help"]).status.success());
    let v = tversky(&["--version"]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn runtime_errors_carry_a_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    let e = error_line(&tversky(&["field", "p1 & (x2", "--out", out]));
    assert_eq!(e["error"], "parse");
    assert!(e["message"].as_str().unwrap().contains("column 9"));
    assert!(
        !Path::new(out).exists(),
        "nothing is written for a malformed expression"
    );

    let e = error_line(&tversky(&["field", "p1 - x9", "--out", out]));
    assert_eq!(e["error"], "unknown_object");

    let e = error_line(&tversky(&["eval", "--checkpoint", "/no/such/model.bin", "--out", out]));
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("/no/such/model.bin"));

    let e = error_line(&tversky(&["xor-construct", "--config", "/no/such.toml", "--out", out]));
    assert_eq!(e["error"], "io");
}

#[test]
fn reduction_flags_override_the_constructed_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = tversky(&[
        "xor-construct",
        "--intersection",
        "product",
        "--difference",
        "substractmatch",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let s = json(&out.join("summary.json"));
    assert_eq!(s["reduction"]["intersection"], "product");
    assert_eq!(s["reduction"]["difference"], "substractmatch");
    let cfg = std::fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(cfg.contains("product"));
}

#[test]
fn sweep_dry_run_counts_the_full_grid() {
    let o = tversky(&["xor-sweep", "--grid", "full", "--dry-run"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("trials 11664"), "{text}");
}

#[test]
fn small_sweep_writes_results_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let args = [
        "xor-sweep",
        "--seeds",
        "2",
        "--epochs",
        "30",
        "--out",
        out.to_str().unwrap(),
    ];
    assert!(tversky(&args).status.success());
    let first = std::fs::read(out.join("results.csv")).unwrap();
    assert!(tversky(&args).status.success());
    let second = std::fs::read(out.join("results.csv")).unwrap();
    assert_eq!(first, second);
    assert_eq!(json(&out.join("summary.json"))["trials"], 16);
}
