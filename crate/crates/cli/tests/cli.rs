// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn ppcu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppcu")).args(args).env_remove("PPCU_OUT_DIR").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn params() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("params/table1.json").display().to_string()
}

#[test]
fn protocol_run_is_clean() {
    let o = ppcu(&["run", "fig1a.scn", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("no violations"));
    assert!(text.contains("messages=24"));
}

#[test]
fn naive_run_reports_blackholes() {
    let o = ppcu(&["run", "fig1a", "--naive", "--fuzz", "5"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("Drop:") || text.contains("Loop:"), "{text}");
}

#[test]
fn bad_scenario_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    std::fs::write(&p, r#"{"name": "b", "header_width": 4, "initial_rules": {}}"#).unwrap();
    let o = ppcu(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("topology"), "{err}");
    assert_eq!(ppcu(&["run", "no-such-scenario"]).status.code(), Some(2));
    assert_eq!(ppcu(&["run", "tiny", "--ablate", "nonsense"]).status.code(), Some(2));
}

#[test]
fn trace_round_trips_through_check() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("case3.trace");
    let report = dir.path().join("case3.json");
    let o = ppcu(&[
        "run",
        "case3",
        "--seed",
        "2",
        "--ablate",
        "fp2",
        "--trace",
        trace.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc["violations"]["PPC"].as_u64().unwrap() > 0);

    // The trace has no record of the ablation, so the plain protocol
    // checker still flags the mixed paths.
    let c = ppcu(&["check", trace.to_str().unwrap(), "case3"]);
    assert_eq!(c.status.code(), Some(1));
    assert!(stdout(&c).contains("PPC:"));

    let clean = dir.path().join("clean.trace");
    let o = ppcu(&["run", "case3", "--trace", clean.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(ppcu(&["check", clean.to_str().unwrap(), "case3"]).status.code(), Some(0));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ppcu"))
        .args(["run", "tiny", "--seed", "1"])
        .env("PPCU_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("tiny-1.trace").exists());
    assert!(dir.path().join("tiny-1.report.json").exists());
}

#[test]
fn table1_prints_every_scheme() {
    let o = ppcu(&["table1", &params()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.matches("parameter set").count(), 3);
    assert!(text.contains("claim holds"));
    assert!(!text.contains("FAILS"));
}

#[test]
fn explore_finds_counterexample_only_when_ablated() {
    assert_eq!(ppcu(&["explore", "case3_kernel"]).status.code(), Some(0));
    let o = ppcu(&["explore", "case3_kernel", "--ablate", "case3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("counterexample"));
}
