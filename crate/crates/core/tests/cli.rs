//! Drives the `lcr` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str =
    "seed = 4\nnodes = 3\nduration_seconds = 7\n[workload]\nclients = 4\nwarmup_ms = 200\n";

fn lcr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_verify_compare() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, SCENARIO).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    let out = lcr(&["run", path(&scenario), "--out", path(&a)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).ends_with("PASS\n"));
    for f in [
        "trace.csv",
        "metrics.csv",
        "verdict.txt",
        "node0.log",
        "node2.log",
    ] {
        assert!(a.join(f).exists(), "{f} missing");
    }

    let out = lcr(&["verify", path(&a.join("trace.csv"))]);
    assert_eq!(out.status.code(), Some(0));

    let out = lcr(&[
        "run",
        path(&scenario),
        "--out",
        path(&b),
        "--protocol",
        "raft",
    ]);
    assert!(out.status.success());
    let out = lcr(&["compare", path(&a), path(&b)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!out.stdout.is_empty());
}

#[test]
fn broken_trace_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    std::fs::write(
        &trace,
        "10,alloc,n1,-,future,1,index=6;gen=5;rid=0:1;digest=aa\n\
         11,alloc,n1,-,future,1,index=6;gen=5;rid=0:2;digest=bb\n",
    )
    .unwrap();
    let out = lcr(&["verify", path(&trace)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL future_index_uniqueness"));
}

#[test]
fn invalid_scenario_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, "seed = 1\nnodes = 2\n").unwrap();
    let out = lcr(&["run", path(&scenario), "--out", path(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nodes"));
}
