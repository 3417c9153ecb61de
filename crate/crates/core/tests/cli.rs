use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ulra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulra"))
        .args(args)
        .output()
        .expect("spawn ulra")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn write_identity(path: &Path, n: usize) {
    let mut s = format!("{n} {n}\n");
    for i in 0..n {
        let row: Vec<&str> = (0..n).map(|j| if i == j { "1" } else { "0" }).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn hadamard_writes_the_text_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h2.mat");
    let out = ulra(&["hadamard", "--nu", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let m = ulra::io::read_matrix(&path).unwrap();
    assert_eq!(&m, ulra::hadamard::build_hadamard(2).unwrap().matrix());
}

#[test]
fn synth_small_hadamard() {
    let out = ulra(&["synth", "--nu", "3", "--s", "1", "--policy", "a", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let r = &v["result"];
    assert!(r["mu"].as_f64().unwrap() < 0.5);
    assert!(!r["rows"].as_array().unwrap().is_empty());
    assert_eq!(r["certified"], Value::Bool(true));
    assert!(v["seconds"].is_null());
    assert_eq!(v["config"]["command"], "synth");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    let h = &r["history"][0];
    for key in ["k", "mu", "beta", "delta", "pick"] {
        assert!(!h[key].is_null(), "history lacks {key}");
    }
}

#[test]
fn synth_out_of_budget_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = ulra(&[
        "synth",
        "--nu",
        "4",
        "--s",
        "6",
        "--k-max",
        "4",
        "--policy",
        "blind",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["result"]["certified"], Value::Bool(false));
}

#[test]
fn synth_general_matrix_needs_a_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mat");
    std::fs::write(&a, "2 2\n1 2\n3 4\n").unwrap();
    let out = ulra(&["synth", "--matrix", a.to_str().unwrap(), "--s", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("initialization LP"), "{err}");
}

#[test]
fn synth_accepts_a_hadamard_file_without_y() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("h.mat");
    ulra(&["hadamard", "--nu", "3", "--out", a.to_str().unwrap()]);
    let out = ulra(&["synth", "--matrix", a.to_str().unwrap(), "--s", "1", "--policy", "b"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn timing_fills_seconds() {
    let out = ulra(&["synth", "--nu", "2", "--s", "1", "--timing"]);
    assert!(json(&out)["seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn lowrank_identity_and_zero() {
    let dir = tempfile::tempdir().unwrap();
    let eye = dir.path().join("eye.mat");
    write_identity(&eye, 16);
    let out = ulra(&["lowrank", "--matrix", eye.to_str().unwrap(), "--k", "4", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out)["result"].clone();
    assert!(r["error"].as_f64().unwrap() >= r["rank_lower_bound"].as_f64().unwrap());
    assert_eq!(r["left"].as_array().unwrap().len(), 4);

    let zero = dir.path().join("zero.mat");
    std::fs::write(&zero, "2 3\n0 0 0\n0 0 0\n").unwrap();
    let p = dir.path().join("p.mat");
    std::fs::write(&p, "2 1\n0\n0\n").unwrap();
    let q = dir.path().join("q.mat");
    std::fs::write(&q, "3 1\n0\n0\n0\n").unwrap();
    let out = ulra(&[
        "lowrank",
        "--factors",
        p.to_str().unwrap(),
        q.to_str().unwrap(),
        "--k",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["result"]["error"].as_f64(), Some(0.0));

    let out = ulra(&["lowrank", "--matrix", "/no/such/file.mat", "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn norm_of_identity() {
    let dir = tempfile::tempdir().unwrap();
    let eye = dir.path().join("eye.mat");
    write_identity(&eye, 8);
    let out = ulra(&["norm", "--matrix", eye.to_str().unwrap()]);
    let r = json(&out)["result"].clone();
    assert_eq!(r["lower"].as_f64(), Some(1.0));
    assert_eq!(r["upper"].as_f64(), Some(1.0));
    assert_eq!(r["corridor_ok"], Value::Bool(true));
}

#[test]
fn goodness_of_hadamard_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.mat");
    ulra(&["hadamard", "--nu", "3", "--out", h.to_str().unwrap()]);
    for extra in [None, Some("--hadamard-shortcut")] {
        let mut args = vec!["goodness", "--matrix", h.to_str().unwrap()];
        args.extend(extra);
        let out = ulra(&args);
        assert_eq!(out.status.code(), Some(0));
        let r = json(&out)["result"].clone();
        assert_eq!(r["mu"].as_f64(), Some(0.0));
        assert!(r["s_max"].is_null());
        assert_eq!(r["s_max_unbounded"], Value::Bool(true));
    }
    let bad = dir.path().join("bad.mat");
    std::fs::write(&bad, "2 2\n1 0.5\n0.5 1\n").unwrap();
    let out = ulra(&["goodness", "--matrix", bad.to_str().unwrap(), "--hadamard-shortcut"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flags_are_rejected() {
    assert_eq!(ulra(&["norm", "--matrix", "x", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(
        ulra(&["synth", "--nu", "3", "--s", "1", "--policy", "random"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ulra(&["synth", "--nu", "3", "--matrix", "a.mat", "--s", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(ulra(&["--version"]).status.code(), Some(0));
}
