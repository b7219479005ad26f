//! End-to-end tests of the `qmf` binary: exit codes, report files, CSV and timing.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

struct Run {
    code: i32,
    report: Value,
    raw: String,
}

fn qmf(args: &[&str], dir: &Path, tag: &str) -> Run {
    let out = dir.join(format!("{tag}.json"));
    let status = Command::new(env!("CARGO_BIN_EXE_qmf")).args(args).arg("--out").arg(&out).status().expect("spawn qmf");
    let raw = std::fs::read_to_string(&out).expect("report written");
    Run { code: status.code().expect("exit code"), report: serde_json::from_str(&raw).expect("valid json"), raw }
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn passing_runs_exit_zero_with_versioned_reports() {
    let dir = tempfile::tempdir().unwrap();
    let tree = config("tree3_isometry.json");
    for cmd in ["tessellate", "verify", "converge"] {
        let run = qmf(&[cmd, "--config", path_arg(&tree)], dir.path(), cmd);
        assert_eq!(run.code, 0, "{cmd}: {}", run.raw);
        assert_eq!(run.report["schema_version"], 1);
        assert_eq!(run.report["command"], cmd);
        assert!(run.report.get("envelope").is_none());
    }
}

#[test]
fn malformed_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("noroot.json");
    std::fs::write(&bad, r#"{"graph": {"kind": "path"}, "depth": 2}"#).unwrap();
    let run = qmf(&["tessellate", "--config", path_arg(&bad)], dir.path(), "noroot");
    assert_eq!(run.code, 1);
    assert!(run.report["error"].as_str().unwrap().contains("root"));

    let missing = dir.path().join("absent.json");
    let run = qmf(&["verify", "--config", path_arg(&missing)], dir.path(), "absent");
    assert_eq!(run.code, 1);
}

#[test]
fn failed_checks_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, name) in [("tessellate", "lattice2.json"), ("verify", "path_transpose.json"), ("converge", "path_incompatible.json")] {
        let run = qmf(&[cmd, "--config", path_arg(&config(name))], dir.path(), name);
        assert_eq!(run.code, 2, "{name}: {}", run.raw);
        assert_eq!(run.report["pass"], false);
    }
}

#[test]
fn dimension_cap_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let run = qmf(&["converge", "--config", path_arg(&config("path_isometry.json")), "--max-dim", "4"], dir.path(), "cap");
    assert_eq!(run.code, 3);
    assert!(run.report["error"].as_str().unwrap().contains("cap"));
}

#[test]
fn converge_writes_csv_matching_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("values.csv");
    let run = qmf(&["converge", "--config", path_arg(&config("path_isometry.json")), "--csv", path_arg(&csv)], dir.path(), "conv");
    assert_eq!(run.code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("observable,n,value"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    for row in &rows {
        assert_eq!(row.len(), 3);
        row[1].parse::<usize>().unwrap();
        row[2].parse::<f64>().unwrap();
    }
    let reports = run.report["reports"].as_array().unwrap();
    let observables: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(observables.len(), reports.len());
}

#[test]
fn timing_adds_an_envelope_only_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("path_isometry.json");
    let run = qmf(&["converge", "--config", path_arg(&cfg), "--timing"], dir.path(), "timed");
    let secs: f64 = run.report["envelope"]["runtime_seconds"].as_str().unwrap().parse().unwrap();
    assert!(secs >= 0.0);
    let plain = qmf(&["converge", "--config", path_arg(&cfg)], dir.path(), "plain");
    let mut timed = run.report.clone();
    timed.as_object_mut().unwrap().remove("envelope");
    assert_eq!(timed, plain.report);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("path_isometry.json");
    let args = ["converge", "--config", path_arg(&cfg), "--enum-seed", "3"];
    let a = qmf(&args, dir.path(), "a");
    let b = qmf(&args, dir.path(), "b");
    assert_eq!(a.raw, b.raw);
}
