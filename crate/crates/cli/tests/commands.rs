use std::io::Write as _;
use std::process::{Command, Output};

use serde_json::Value;

fn souschef(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_souschef")).args(args).output().unwrap()
}

fn last_json_line(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().rev().find(|l| !l.trim().is_empty()).unwrap();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

#[test]
fn golden_path_demo() {
    let out = souschef(&["demo", "--scenario", "golden_path"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = last_json_line(&out);
    assert_eq!(summary["scanned"], 5);
    assert_eq!(summary["offered"].as_array().unwrap().len(), 3);
    assert_eq!(summary["shopping_list"], serde_json::json!(["salt", "black pepper"]));
}

#[test]
fn allergen_demo_shows_the_discard() {
    let out = souschef(&["demo", "--scenario", "allergen_block"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("discarded \"Peanut Butter Pancakes\""));
    assert!(!last_json_line(&out)["offered"].to_string().contains("Peanut"));
}

#[test]
fn scenario_file_path_works() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/pantry_violation.toml");
    let out = souschef(&["demo", "--scenario", path]);
    assert_eq!(out.status.code(), Some(0));
}

fn temp_scenario(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn absent_fixture_is_a_setup_error_before_any_step() {
    let f = temp_scenario(
        "name = \"ghost\"\n[[steps]]\naction = \"scan\"\nsnapshot = \"counter.png\"\nwidth_px = 640\nheight_px = 480\nfixture = \"no_such_fixture\"\n",
    );
    let out = souschef(&["demo", "--scenario", f.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("detect_ingredients__no_such_fixture"));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("POST"));
}

#[test]
fn broken_expectation_exits_1() {
    let f = temp_scenario(
        "name = \"wrong\"\n[[steps]]\naction = \"scan\"\nsnapshot = \"counter.png\"\nwidth_px = 640\nheight_px = 480\nfixture = \"five_items\"\nexpect_labels = 4\n",
    );
    let out = souschef(&["demo", "--scenario", f.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED step 1 (scan)"));
}

#[test]
fn unknown_scenario_and_bad_usage_exit_2() {
    assert_eq!(souschef(&["demo", "--scenario", "nope"]).status.code(), Some(2));
    assert_eq!(souschef(&["survey", "--section", "cooking", "--input", "x"]).status.code(), Some(2));
    assert_eq!(souschef(&["bake"]).status.code(), Some(2));
    assert_eq!(souschef(&["serve", "--config", "/no/such.toml"]).status.code(), Some(2));
}

fn write_csv(rows: &[(&str, u8, &str, &str, u8)]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "participant_id,round,section,question_id,score").unwrap();
    for (p, r, s, q, v) in rows {
        writeln!(f, "{p},{r},{s},{q},{v}").unwrap();
    }
    f
}

#[test]
fn survey_json_and_text() {
    let f = write_csv(&[
        ("a", 1, "usability", "ease", 4),
        ("b", 1, "usability", "ease", 3),
        ("c", 2, "usability", "ease", 5),
    ]);
    let path = f.path().to_str().unwrap();
    let out = souschef(&["survey", "--input", path, "--round", "1", "--section", "usability", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let report = last_json_line(&out);
    assert_eq!(report["per_question_mean"]["ease"], 3.5);
    assert_eq!(report["n_participants"], 2);

    let out = souschef(&["survey", "--input", path, "--section", "usability"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("all rounds"), "{text}");
    assert!(text.contains("4.000"), "{text}");
}

#[test]
fn survey_incomplete_data_names_the_gap() {
    let f = write_csv(&[
        ("a", 1, "background", "q1", 4),
        ("a", 1, "background", "q2", 4),
        ("b", 1, "background", "q1", 2),
    ]);
    let out = souschef(&["survey", "--input", f.path().to_str().unwrap(), "--section", "background"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("participant b") && err.contains("question q2"), "{err}");
}

#[test]
fn survey_rejects_out_of_range_round() {
    let f = write_csv(&[("a", 1, "background", "q1", 4)]);
    let out = souschef(&["survey", "--input", f.path().to_str().unwrap(), "--round", "4", "--section", "background"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn example_config_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/souschef.example.toml");
    let config = souschef_service::ServiceConfig::load(path.as_ref()).unwrap();
    config.build_gateway().unwrap();
    assert!(config.staples.allows("black pepper"));
}
