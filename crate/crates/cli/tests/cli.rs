use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isoshift"))
}

fn write_spec(dir: &Path, name: &str, spec: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    p
}

fn run(spec: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(spec).args(extra).output().unwrap()
}

fn one(x: f64) -> Value {
    json!([[[x, 0.0]]])
}

fn scalar_tuple(p1: f64, p2: f64) -> Value {
    json!({"n": 2, "e": 1, "U": [one(1.0), one(1.0)], "P": [one(p1), one(p2)]})
}

fn read_report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn validate_bcl_pass_and_condition_d_failure() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_spec(dir.path(), "good.json", &json!({"task": "validate-bcl", "input": scalar_tuple(1.0, 0.0)}));
    let out_path = dir.path().join("report.json");
    let out = run(&good, &["--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_report(&out_path);
    assert_eq!(check(&report, "condition_d")["pass"], true);
    assert_eq!(report["environment"]["mode"], "strict");

    let bad = write_spec(dir.path(), "bad.json", &json!({"task": "validate-bcl", "input": scalar_tuple(1.0, 1.0)}));
    let out = run(&bad, &["--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report = read_report(&out_path);
    assert_eq!(check(&report, "condition_d")["pass"], false);
    assert!(String::from_utf8_lossy(&out.stdout).contains("condition_d"));
}

fn h2_minus_constants(task: &str) -> Value {
    json!({
        "task": task,
        "input": {
            "n": 2,
            "grid": 10,
            "phis": [{"zeros": [[0, 0], [0, 0]]}, {"zeros": [[0, 0]]}],
            "S": {"codim_complement_basis": [[{"exp": [0, 0]}]]}
        }
    })
}

#[test]
fn full_equivalence_on_h2_minus_constants() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "full.json", &h2_minus_constants("full-equivalence"));
    let out_path = dir.path().join("report.json");
    let out = run(&spec, &["--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_report(&out_path);
    let names: Vec<&str> = report["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.iter().any(|n| n.starts_with("main1.reverse")));
    assert!(names.iter().any(|n| n.starts_with("main2.forward")));
    assert!(names.contains(&"full.isometry"));
    assert_eq!(report["environment"]["trunc"], json!([10, 10]));
}

#[test]
fn cstar_check_with_permuted_variants() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = h2_minus_constants("cstar-check");
    spec["permuted_variants"] = json!(true);
    spec["input"]["words"] = json!(["R_{z1} R*_{z2}"]);
    let path = write_spec(dir.path(), "c.json", &spec);
    let out = bin().arg("run").arg(&path).args(["--trunc", "8", "--json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(check(&report, "commutator.rank.i=1,j=2")["rank"], 1);
    check(&report, "main2.perm=1.m");
    check(&report, "compress.word=R_{z1}R*_{z2}");
}

#[test]
fn report_is_deterministic_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "c.json", &h2_minus_constants("cstar-check"));
    let strip = |v: &mut Value| {
        v["environment"]["wall_time"] = json!(0.0);
        serde_json::to_string(v).unwrap()
    };
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(run(&spec, &["--seed", "7", "--out", a.to_str().unwrap()]).status.code(), Some(0));
    let out = bin().env("ISOSHIFT_THREADS", "1").arg("run").arg(&spec).args(["--seed", "7", "--out", b.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(strip(&mut read_report(&a)), strip(&mut read_report(&b)));
}

#[test]
fn schema_violations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_spec(dir.path(), "u.json", &json!({"task": "nope", "input": {}}));
    assert_eq!(run(&unknown, &[]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&missing, &[]).status.code(), Some(2));
    let good = write_spec(dir.path(), "g.json", &json!({"task": "validate-bcl", "input": scalar_tuple(1.0, 0.0)}));
    assert_eq!(run(&good, &["--tol", "-1"]).status.code(), Some(2));
    let shape = write_spec(dir.path(), "s.json", &json!({"task": "validate-bcl", "input": {"n": 2, "e": 1, "U": [one(1.0)], "P": [one(1.0)]}}));
    assert_eq!(run(&shape, &[]).status.code(), Some(2));
    let out = bin().env("ISOSHIFT_THREADS", "many").arg("run").arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let small = write_spec(dir.path(), "t.json", &json!({"task": "validate-bcl", "input": scalar_tuple(1.0, 0.0), "trunc": 1}));
    assert_eq!(run(&small, &[]).status.code(), Some(2));
}

#[test]
fn precondition_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = h2_minus_constants("cstar-check");
    spec["input"]["phis"] = json!([{"zeros": [[0, 0], [0, 0], [0, 0], [0, 0]]}, {"zeros": [[0, 0]]}]);
    let path = write_spec(dir.path(), "p.json", &spec);
    assert_eq!(run(&path, &["--trunc", "5"]).status.code(), Some(3));
    let mut spec = h2_minus_constants("cstar-check");
    spec["input"]["S"] = json!({"codim_complement_basis": [[{"exp": [1, 0]}]]});
    let path = write_spec(dir.path(), "q.json", &spec);
    assert_eq!(run(&path, &[]).status.code(), Some(3));
}

#[test]
fn lossy_mode_drops_terms_outside_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = h2_minus_constants("cstar-check");
    spec["input"]["S"] = json!({"generators": [[{"exp": [1, 0]}], [{"exp": [0, 1]}, {"exp": [0, 12], "c": [0.5, 0]}]]});
    let path = write_spec(dir.path(), "l.json", &spec);
    assert_eq!(run(&path, &[]).status.code(), Some(3));
    let out = run(&path, &["--mode", "lossy", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(check(&report, "input.truncation")["truncation_loss"], 0.5);
}

#[test]
fn extract_model_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "e.json", &json!({"task": "extract-model", "input": {"polydisc": {"n": 2}}, "trunc": 8}));
    let out = run(&spec, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let spec = write_spec(dir.path(), "s.json", &json!({"task": "extract-model", "input": {"symbols": scalar_tuple(1.0, 0.0)}}));
    let out = run(&spec, &["--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(check(&report, "round_trip.intertwiner.unitary")["pass"], true);
}

#[test]
fn factor_invariant_task() {
    let dir = tempfile::tempdir().unwrap();
    let ambient = json!({"n": 1, "e": 1, "U": [one(1.0)], "P": [one(1.0)]});
    let theta = json!({"rows": 1, "cols": 1, "coeffs": [[[[0, 0]]], [[[1, 0]]]]});
    let spec = write_spec(dir.path(), "f.json", &json!({"task": "factor-invariant", "input": {"ambient": ambient, "theta": theta}, "trunc": 16}));
    let out = run(&spec, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
