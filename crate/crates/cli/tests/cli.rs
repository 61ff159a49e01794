use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qwold(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qwold")).args(args).env("QWOLD_SEED", "7").output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: stdout {:?} stderr {:?}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn check_names(r: &Value) -> Vec<String> {
    r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap().to_string()).collect()
}

/// `(R_q M_z, M_z)` on H², written in the operator JSON format.
fn rotated_pair_file(dir: &Path, q: Option<&str>) -> String {
    let op = |atoms: &str| {
        format!(r#"{{"signature": {{"d": 1, "fiberDim": 1, "kuDim": 0}}, "terms": [{{"scalar": [1.0, 0.0], "atoms": [{atoms}]}}]}}"#)
    };
    let q = q.map(|q| format!(r#""q": "{q}", "#)).unwrap_or_default();
    let body = format!(r#"{{{q}"operators": [{}, {}]}}"#, op(r#""Rot:1/8", "Shift:1""#), op(r#""Shift:1""#));
    let path = dir.join("pair.json");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn first_example_verifies_as_doubly_q_commutative() {
    let out = qwold(&["verify", "--example", "rq-mz", "--q", "1/8", "--trunc", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["overall"], "pass");
    assert_eq!(r["data"]["doublyQ"]["verdict"], true);
    assert_eq!(r["environment"]["seed"], 7);
}

#[test]
fn second_example_is_not_doubly_q_commutative() {
    let out = qwold(&["verify", "--example", "rqmz-mz", "--q", "1/8"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["data"]["doublyQ"]["verdict"], false);
    assert_eq!(r["data"]["doublyQ"]["witness"], "1");
}

#[test]
fn pair_without_any_phase_reports_non_existence() {
    let out = qwold(&["verify", "--example", "no-q-2x2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["data"]["verdict"], "no unimodular q exists");
}

#[test]
fn prover_accepts_the_third_intertwining_power() {
    let out = qwold(&["prove", "--lhs", "(g2* g1*)^3 g1", "--rhs", "phase:2/8 g2* (g2* g1*)^2", "--q", "1/8"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["overall"], "pass");
}

#[test]
fn prover_rejects_plain_commutation() {
    let out = qwold(&["prove", "--lhs", "g1 g2", "--rhs", "g2 g1", "--q", "1/8"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["overall"], "fail");
}

#[test]
fn doubly_relations_are_opt_in() {
    let args = ["prove", "--lhs", "g2 g1*", "--rhs", "phase:1/8 g1* g2", "--q", "1/8"];
    assert_eq!(qwold(&args).status.code(), Some(1));
    let mut doubly = args.to_vec();
    doubly.push("--doubly");
    assert_eq!(qwold(&doubly).status.code(), Some(0));
}

#[test]
fn error_categories_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qwold(&["verify", "--example", "annulus"]).status.code(), Some(4));
    assert_eq!(qwold(&["verify"]).status.code(), Some(2));
    assert_eq!(qwold(&["prove", "--lhs", "g1 h2", "--rhs", "g1", "--q", "1/8"]).status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    assert_eq!(qwold(&["verify", "--input", missing.to_str().unwrap()]).status.code(), Some(3));
    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{ not json").unwrap();
    assert_eq!(qwold(&["verify", "--input", garbled.to_str().unwrap()]).status.code(), Some(3));

    let pair = rotated_pair_file(dir.path(), None);
    let out = qwold(&["verify", "--input", &pair, "--q", "1/4"]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn phase_is_inferred_from_an_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let pair = rotated_pair_file(dir.path(), None);
    let out = qwold(&["verify", "--input", &pair, "--trunc", "12"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&out);
    assert_eq!(r["data"]["q"], "1/8");
    assert_eq!(r["data"]["qInferred"], true);

    let with_q = rotated_pair_file(dir.path(), Some("1/8"));
    let r = report(&qwold(&["extract", "--input", &with_q, "--trunc", "12"]));
    assert_eq!(r["data"]["tuple"]["fiberDim"], 2);
}

#[test]
fn reports_are_byte_stable_and_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("report.json");
    let args = ["verify", "--example", "bidisk", "--q", "1/8", "--trunc", "8", "--json", file.to_str().unwrap()];
    let a = qwold(&args);
    let b = qwold(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(&file).unwrap(), a.stdout);
    let names = check_names(&report(&a));
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn extension_and_passage_subcommands_pass_on_fixtures() {
    let out = qwold(&["extend", "--example", "rqmz-mz", "--q", "1/8", "--trunc", "8", "--bilateral", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["data"]["exact"], true);
    assert!(check_names(&r).contains(&"extension-relation-1-2".to_string()));

    let out = qwold(&["passage", "--example", "bidisk", "--q", "1/8", "--direction", "comm2q", "--trunc", "8"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(report(&out)["data"]["rqDiagonal"].is_array());

    let out = qwold(&["passage", "--example", "bidisk", "--q", "1/8", "--direction", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn wold_splits_a_unitary_and_a_shift() {
    let r = report(&qwold(&["wold", "--example", "rq-mz", "--q", "1/8", "--operator", "1", "--trunc", "8"]));
    assert_eq!(r["overall"], "pass");
    let r2 = report(&qwold(&["wold", "--example", "rq-mz", "--q", "1/8", "--operator", "2", "--trunc", "8"]));
    assert_eq!(r2["overall"], "pass");
    assert_ne!(r["data"]["parts"], r2["data"]["parts"]);
}
