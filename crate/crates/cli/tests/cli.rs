use std::process::{Command, Output};

use qsemigroup::report::{ConjectureBatch, Report, SCHEMA};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsemigroup"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn structured_report(args: &[&str]) -> (i32, Report) {
    let mut all = args.to_vec();
    all.extend(["--format", "structured"]);
    let out = run(&all);
    let report = Report::from_json(&stdout(&out)).expect("structured output parses");
    (out.status.code().unwrap(), report)
}

#[test]
fn thermal_qubit_full_pipeline() {
    let (code, r) = structured_report(&["analyze", "builtin:thermal_qubit(2,1)"]);
    assert_eq!(code, 0, "{:?}", r.findings);
    assert_eq!(r.schema, SCHEMA);
    assert!(r.invariant.faithful);
    assert_eq!(r.fixed_points.as_ref().unwrap().fixed.dimension, 1);
    assert!(r.adjoint.as_ref().unwrap().detailed_balance.detailed_balance);
    let a = r.asymptotics.as_ref().unwrap();
    assert!(a.ergodic.holds && a.k_property.holds);
    assert!(r.dilation.is_some());
}

#[test]
fn dephasing_is_not_ergodic() {
    let (code, r) = structured_report(&["analyze", "builtin:dephasing(0.5)"]);
    assert_eq!(code, 0, "{:?}", r.findings);
    let f = r.fixed_points.as_ref().unwrap();
    assert_eq!(f.fixed.dimension, 2);
    assert_eq!(f.multiplicative_domain.as_ref().unwrap().dimension, 2);
    assert!(!r.asymptotics.as_ref().unwrap().ergodic.holds);
}

#[test]
fn structured_report_round_trips_with_identical_verdicts() {
    let out = run(&["analyze", "builtin:amplitude_damping(1)", "--format", "structured"]);
    let text = stdout(&out);
    let r = Report::from_json(&text).unwrap();
    assert_eq!(r.to_json().trim(), text.trim());
    let text_out = stdout(&run(&["analyze", "builtin:amplitude_damping(1)"]));
    let a = r.asymptotics.as_ref().unwrap();
    assert!(text_out.contains(&format!("K-property {}", if a.k_property.holds { "yes" } else { "no" })));
}

#[test]
fn section_commands_only_fill_their_section() {
    let (_, r) = structured_report(&["invariant", "builtin:random(3)"]);
    assert!(r.fixed_points.is_none() && r.adjoint.is_none() && r.asymptotics.is_none() && r.dilation.is_none());
    let (_, r) = structured_report(&["fixed-points", "builtin:random(3)"]);
    assert!(r.fixed_points.is_some() && r.asymptotics.is_none());
    let (_, r) = structured_report(&["adjoint", "builtin:random(3)"]);
    assert!(r.adjoint.is_some() && r.fixed_points.is_none());
    let (_, r) = structured_report(&["mixing", "builtin:random(3)", "--horizon", "40"]);
    assert_eq!(r.asymptotics.as_ref().unwrap().horizon, 40.0);
}

#[test]
fn dilation_writes_delta_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "dilation",
        "builtin:thermal_qubit(2,1)",
        "--grid",
        "0,1",
        "--tails",
        "-1,-2,-4",
        "--csv-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let csv = std::fs::read_to_string(dir.path().join("delta_decay.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,value"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (t, v) = l.split_once(',').unwrap();
            (t.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![-1.0, -2.0, -4.0]);
    assert!(rows.windows(2).all(|w| w[1].1 < w[0].1));
}

#[test]
fn analyze_writes_both_decay_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze",
        "builtin:thermal_qubit(2,1)",
        "--csv-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["delta_decay.csv", "correlation_decay.csv"] {
        let csv = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(csv.starts_with("t,value\n"), "{name}");
        assert!(csv.lines().count() > 2, "{name}");
    }
}

#[test]
fn model_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.json");
    let file = qsemigroup::models::ModelFile::from_chain(&qsemigroup::models::two_state_symmetric_chain());
    std::fs::write(&path, file.to_json()).unwrap();
    let (code, r) = structured_report(&["mixing", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{:?}", r.findings);
    assert!(r.asymptotics.unwrap().ergodic.holds);
}

#[test]
fn minimal_check_passes_on_defaults() {
    let out = run(&["minimal-check"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("pass"));
}

#[test]
fn minimal_check_with_too_few_steps_is_a_finding() {
    let out = run(&["minimal-check", "builtin:dephasing(0.5)", "--steps", "2"]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
}

#[test]
fn minimal_check_rejects_classical_chains() {
    let out = run(&["minimal-check", "builtin:three_state_chain"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn conjecture_probe_batch() {
    let out = run(&["probe-conjecture43", "--seeds", "8", "--format", "structured"]);
    assert_eq!(out.status.code(), Some(0));
    let batch: ConjectureBatch = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(batch.entries.len() + batch.skipped.len(), 8);
    assert!(batch.disagreements.is_empty());
}

#[test]
fn input_errors_exit_with_one() {
    for args in [
        vec!["frobnicate"],
        vec!["analyze", "builtin:dephasing(0.5)", "--bogus"],
        vec!["analyze", "/definitely/not/here.json"],
        vec!["analyze", "builtin:no_such_model"],
        vec!["analyze", "builtin:dephasing(0.5)", "--tol", "0"],
        vec!["analyze", "builtin:dephasing(0.5)", "--format", "xml"],
        vec!["dilation", "builtin:dephasing(0.5)", "--grid", "1,0"],
        vec!["probe-conjecture43", "--seeds", "0"],
        vec![],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn malformed_model_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(run(&["analyze", path.to_str().unwrap()]).status.code(), Some(1));
}
