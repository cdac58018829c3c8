//! Runs the installed binary end to end on generated fixtures.

use std::path::Path;
use std::process::{Command, Output};

use permconf::inference::AnalysisReport;
use serde_json::Value;

fn permconf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permconf")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = permconf(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_record(out: &Output) -> Value {
    serde_json::from_slice::<Value>(&out.stderr).unwrap()["error"].clone()
}

const FEATURES: &str = r#"["x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10"]"#;

/// Generates a classification fixture and analyzes it, returning the report.
fn analyze_fixture(dir: &Path, joint: [f64; 4], seed: &str) -> AnalysisReport {
    std::fs::write(
        dir.join("gen.toml"),
        format!("[generate]\nmodel = \"classification\"\nn = 600\njoint = {joint:?}\nbeta = 1.0\ntheta = 1.0\n"),
    )
    .unwrap();
    ok(dir, &["generate", "--config", "gen.toml", "--seed", seed, "--out", "data"]);
    std::fs::write(
        dir.join("analyze.toml"),
        format!("b = 2000\n[data]\npath = \"data/data.csv\"\nfeature_cols = {FEATURES}\nresponse_col = \"y\"\nconfounder_cols = [\"c\"]\n"),
    )
    .unwrap();
    let stdout = ok(dir, &["analyze", "--config", "analyze.toml", "--seed", seed, "--out", "analysis"]);
    assert!(stdout["manifest"].as_str().unwrap().ends_with("manifest.json"));
    let text = std::fs::read_to_string(dir.join("analysis/report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn confounded_data_is_flagged_and_corrected_downward() {
    let tmp = tempfile::tempdir().unwrap();
    let report = analyze_fixture(tmp.path(), [0.4, 0.1, 0.1, 0.4], "3");
    assert!(report.confounding_test.p_value < 0.05, "{}", report.confounding_test.p_value);
    assert!(report.corrected[0].m_c < report.observed);
}

#[test]
fn unconfounded_data_is_left_nearly_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let report = analyze_fixture(tmp.path(), [0.25, 0.25, 0.25, 0.25], "4");
    let gap = (report.corrected[0].m_c - report.observed).abs();
    assert!(gap < 0.02, "gap {gap}");
}

#[test]
fn report_survives_a_json_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    analyze_fixture(tmp.path(), [0.4, 0.1, 0.1, 0.4], "5");
    let text = std::fs::read_to_string(tmp.path().join("analysis/report.json")).unwrap();
    let report: AnalysisReport = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&report).unwrap() + "\n";
    assert_eq!(text, again);
    assert_eq!(serde_json::from_str::<AnalysisReport>(&again).unwrap(), report);
}

#[test]
fn manifest_hashes_match_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    analyze_fixture(tmp.path(), [0.4, 0.1, 0.1, 0.4], "6");
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("analysis/manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 3);
    for o in outputs {
        let path = tmp.path().join("analysis").join(o["file"].as_str().unwrap());
        let digest = permconf::harness::sha256_file(&path).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), digest);
    }
}

#[test]
fn missing_response_column_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("data.csv"), "a,b,c\n1,2,x\n3,4,y\n").unwrap();
    std::fs::write(
        dir.join("run.toml"),
        "[data]\npath = \"data.csv\"\nfeature_cols = [\"a\"]\nresponse_col = \"y\"\nconfounder_cols = [\"c\"]\n",
    )
    .unwrap();
    let out = permconf(dir, &["analyze", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["field"], "response_col");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = permconf(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["kind"], "usage");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "sede = 3\n").unwrap();
    let out = permconf(tmp.path(), &["generate", "--config", "bad.toml"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!error_record(&out)["message"].as_str().unwrap().is_empty());
}

#[test]
fn partials_table_lists_every_estimator() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("gen.toml"),
        "[generate]\nmodel = \"correlation\"\nn = 200\nbeta_xc = 1.0\nbeta_yc = -1.0\nbeta_xy = 0.5\n",
    )
    .unwrap();
    ok(dir, &["generate", "--config", "gen.toml", "--seed", "9", "--out", "data"]);
    std::fs::write(
        dir.join("p.toml"),
        "[data]\npath = \"data/data.csv\"\n[partials]\nx_col = \"x\"\ny_col = \"y\"\nc_col = \"c\"\n",
    )
    .unwrap();
    ok(dir, &["partials", "--config", "p.toml", "--b", "200", "--out", "partials"]);
    let text = std::fs::read_to_string(dir.join("partials/partials.csv")).unwrap();
    for name in ["pcov", "pcor", "pdcov", "pdcor"] {
        assert!(text.lines().skip(1).any(|l| l.starts_with(name)), "{name} missing:\n{text}");
    }
}
