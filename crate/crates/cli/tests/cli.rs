use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use heis_cli::report::Report;
use tempfile::TempDir;

fn heis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heis")).args(args).output().unwrap()
}

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn spec(name: &str) -> String {
    specs().join(name).display().to_string()
}

fn report(out: &Output) -> Report {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_spec(dir: &TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn analyze_rotating_h1() {
    let r = report(&heis(&["analyze", &spec("h1_rotating.json")]));
    let v = r.verdict.unwrap();
    assert_eq!(serde_json::to_value(v.outcome).unwrap(), "Controllable");
    assert_eq!(serde_json::to_value(v.provenance).unwrap(), "Thm2");
}

#[test]
fn analyze_opposite_sign_cells() {
    let out = heis(&["analyze", &spec("two_cells_opposite_signs.json")]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["verdict"]["outcome"], "Controllable");
    assert_eq!(json["verdict"]["provenance"], "Thm9/Thm10");
}

#[test]
fn certify_saddle_h1() {
    let out = heis(&["certify", &spec("h1_saddle.json")]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cert = &json["certify"]["certificate"];
    assert_eq!(json["certify"]["found"], true);
    assert_eq!(cert["verified"], true);
    assert_eq!(cert["mu"], 0.0);
    assert!(cert["S"].is_array() && cert["Qprime"].is_array() && cert["lprime"].is_array());
}

#[test]
fn certify_singular_reports_no_certificate() {
    let r = report(&heis(&["certify", &spec("h1_rotating.json")]));
    let c = r.certify.unwrap();
    assert!(!c.found);
    assert!(c.note.contains("singular"));
}

#[test]
fn normal_forms() {
    let r = report(&heis(&["normal-form", &spec("h1_saddle.json")]));
    let json = serde_json::to_value(r.normal_form.unwrap()).unwrap();
    assert_eq!(json["kind"], "h1");
    assert_eq!((json["b"].as_f64().unwrap(), json["d"].as_f64().unwrap()), (1.0, 1.0));
    let r = report(&heis(&["normal-form", &spec("two_cells_regular.json")]));
    let json = serde_json::to_value(r.normal_form.unwrap()).unwrap();
    assert_eq!(json["kind"], "decoupled");
    assert_eq!(json["cells"].as_array().unwrap().len(), 2);
}

#[test]
fn validate_reports_structure() {
    let r = report(&heis(&["validate", &spec("two_cells_regular.json")]));
    let v = r.validation.unwrap();
    assert!(v.derivation_structural && v.derivation_leibniz);
    assert!(v.rank_condition);
    assert_eq!(v.decoupled_cells, vec![0, 1]);
    assert!(!v.singular);
}

#[test]
fn center_column_violation_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(
        &dir,
        "bad.json",
        r#"{"schema_version": 1, "n": 1, "derivation": [[0, 0, 2], [1, 0, 0], [0, 0, 0]], "controls": [[1, 0, 0]]}"#,
    );
    let out = heis(&["validate", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("center column must be (0,…,0,d)"));
}

#[test]
fn short_control_is_a_dimension_error() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(
        &dir,
        "short.json",
        r#"{"schema_version": 1, "n": 2,
            "derivation": [[0,0,0,0,0],[0,0,0,0,0],[0,0,0,0,0],[0,0,0,0,0],[0,0,0,0,0]],
            "controls": [[1, 0, 0, 0]]}"#,
    );
    let out = heis(&["analyze", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension error"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(heis(&["frobnicate", &spec("h1_rotating.json")]).status.code(), Some(1));
    assert_eq!(heis(&["analyze", "/nonexistent/spec.json"]).status.code(), Some(1));
    assert_eq!(heis(&["--help"]).status.code(), Some(0));
}

#[test]
fn report_round_trips() {
    for (cmd, file) in [
        ("analyze", "h1_saddle.json"),
        ("certify", "two_cells_regular.json"),
        ("normal-form", "two_cells_regular.json"),
        ("validate", "h1_rotating.json"),
    ] {
        let out = heis(&[cmd, &spec(file)]);
        let r = report(&out);
        let again: Report = serde_json::from_str(&heis_cli::to_json(&r)).unwrap();
        assert_eq!(r, again);
        assert_eq!(heis_cli::to_json(&again).as_bytes(), out.stdout.as_slice());
    }
}

#[test]
fn simulation_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let csv = dir.path().join(name);
        let out = heis(&[
            "simulate",
            &spec("h1_rotating.json"),
            "--samples",
            "3",
            "--horizon",
            "0.5",
            "--seed",
            "42",
            "--out",
            csv.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        (out.stdout, fs::read_to_string(csv).unwrap())
    };
    let (report_a, csv_a) = run("a.csv");
    let (report_b, csv_b) = run("b.csv");
    assert_eq!(csv_a, csv_b);
    let strip = |bytes: &[u8]| String::from_utf8_lossy(bytes).replace("a.csv", "b.csv");
    assert_eq!(strip(&report_a), strip(&report_b));
    assert!(csv_a.starts_with("sample,t,x1,y1,z\n"));
    let r: Report = serde_json::from_slice(&report_a).unwrap();
    let sim = r.simulation.unwrap();
    assert_eq!(sim.runs.len(), 3);
    assert_eq!(sim.seed, 42);
    let last_line = csv_a.lines().last().unwrap();
    let z: f64 = last_line.rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(z, sim.runs[2].endpoint[2]);
}

#[test]
fn text_mode() {
    let out = heis(&["analyze", &spec("h1_rotating.json"), "--text"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("verdict: controllable [Thm2]"), "{text}");
}
