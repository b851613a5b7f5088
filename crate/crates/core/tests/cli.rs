//! The `dbar` binary: exit codes and output formats.

use std::path::Path;
use std::process::{Command, Output};

fn dbar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbar")).current_dir(dir).args(args).output().expect("run dbar")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let ok = dbar(d.path(), &["verify", "--case", "mono-n1-abs", "--out", "a"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let csv = std::fs::read_to_string(d.path().join("a/checks.csv")).unwrap();
    assert!(csv.starts_with("check_id,case_id,n,residual,tolerance,passed\n"));
    assert!(d.path().join("a/checks.json").exists() && d.path().join("a/timings.csv").exists());

    let bad = dbar(d.path(), &["verify", "--case", "no-such-case"]);
    assert_eq!(bad.status.code(), Some(2));

    std::fs::write(d.path().join("tight.json"), r#"{"cases": ["mono-n1-abs"], "tolerances": {"solution": 1e-15}}"#).unwrap();
    let tight = dbar(d.path(), &["verify", "--config", "tight.json", "--out", "b"]);
    assert_eq!(tight.status.code(), Some(1));
    assert!(stdout(&tight).contains("FAIL solution mono-n1-abs"));

    std::fs::write(d.path().join("typo.json"), r#"{"casez": []}"#).unwrap();
    assert_eq!(dbar(d.path(), &["verify", "--config", "typo.json"]).status.code(), Some(2));
    assert_eq!(dbar(d.path(), &["verify", "--case", "mono-n1-abs", "--grid", "1,2"]).status.code(), Some(2));
    assert_eq!(dbar(d.path(), &["verify", "--case", "mono-n1-abs", "--fd-step", "0.2"]).status.code(), Some(2));
}

#[test]
fn solve_rows() {
    let d = tempfile::tempdir().unwrap();
    // u = z̄_1, g = dz̄_1
    std::fs::write(d.path().join("u.txt"), "(0 1 | 0 0) 1 0\n").unwrap();
    std::fs::write(d.path().join("p.csv"), "0.2,0,0.3,0\n").unwrap();
    let o = dbar(d.path(), &["solve", "--case", "poly:u.txt", "--points", "p.csv", "--henkin"]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let re: f64 = r[2].parse().unwrap();
        assert!((re - 0.2).abs() < 1e-10, "{r:?}");
    }
    assert_eq!((&rows[0][4], &rows[1][4]), ("T", "H"));

    std::fs::write(d.path().join("empty.csv"), "").unwrap();
    let o = dbar(d.path(), &["solve", "--case", "mono-n1-abs", "--points", "empty.csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "case_id,coords,value_re,value_im,method");

    std::fs::write(d.path().join("out.csv"), "1.5,0\n0.1,0\n").unwrap();
    let o = dbar(d.path(), &["solve", "--case", "mono-n1-abs", "--points", "out.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("T:exterior"));
}

#[test]
fn calibrate_tables() {
    let d = tempfile::tempdir().unwrap();
    let o = dbar(d.path(), &["calibrate", "--n", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let t: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(t.as_array().unwrap().len(), 1);
    let o = dbar(d.path(), &["calibrate", "--n", "2", "--out", "s"]);
    assert_eq!(o.status.code(), Some(0));
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("s/signs.json")).unwrap()).unwrap();
    assert_eq!(saved.as_array().unwrap().len(), 2);
    let o = dbar(d.path(), &["calibrate", "--n", "2", "--case", "zero-n2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ambiguous"));
}

#[test]
fn holder_outputs() {
    let d = tempfile::tempdir().unwrap();
    let o = dbar(d.path(), &["holder", "--case", "rough-a0.5-n2", "--case", "mono-n2-conj2", "--case", "zero-n2", "--out", "h"]);
    assert_eq!(o.status.code(), Some(0));
    let reps: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("h/holder.json")).unwrap()).unwrap();
    let alpha = |i: usize, k: &str| reps[i][k]["alpha_hat"].as_f64().unwrap();
    for k in ["g", "tg"] {
        assert!((0.45..=0.6).contains(&alpha(0, k)), "{}", alpha(0, k));
        assert!(alpha(1, k) >= 0.9);
    }
    assert_eq!(reps[2]["tg"]["degenerate"], serde_json::Value::Bool(true));
    let bins = std::fs::read_to_string(d.path().join("h/holder_bins.csv")).unwrap();
    assert!(bins.starts_with("case_id,function,scale,sup_delta\n"));
}

#[test]
fn convergence_table() {
    let d = tempfile::tempdir().unwrap();
    let o = dbar(d.path(), &["convergence", "--out", "c"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(d.path().join("c/convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let order: f64 = csv.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(order >= 1.0);
    let z = dbar(d.path(), &["convergence", "--case", "zero-n2", "--out", "z"]);
    assert_eq!(z.status.code(), Some(0));
    assert!(std::fs::read_to_string(d.path().join("z/convergence.csv")).unwrap().contains(",0e0,NaN"));
}

#[test]
fn list_cases_and_threads() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dbar")).current_dir(d.path()).env("DBAR_THREADS", "1").arg("list-cases").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.starts_with("rough-a0.5-n2\t")));
}
