use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn quizcram(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quizcram")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generated_logs_analyze_to_the_planted_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = quizcram(&["generate-logs", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report_dir = dir.path().join("report");
    let out = quizcram(&[
        "analyze",
        "--logs",
        path(&dir.path().join("logs")),
        "--course",
        path(&dir.path().join("course.json")),
        "--out",
        path(&report_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: Value = serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    let expected: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("expected.json")).unwrap()).unwrap();
    for key in [
        "backward_from_quiz_fraction",
        "forward_to_quiz_window_fraction",
        "chains_not_crossing_quiz_fraction",
        "rewatch_fraction",
    ] {
        let got = report["overall"][key].as_f64().unwrap();
        let want = expected[key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-9, "{key}: {got} vs {want}");
    }

    let scatter = fs::read_to_string(report_dir.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().next(), Some("video_id,source_s,dest_s,direction,crosses_quiz"));
    assert_eq!(scatter.lines().count(), 1 + 110);
    let histogram = fs::read_to_string(report_dir.join("histogram_lecture-1.csv")).unwrap();
    assert_eq!(histogram.lines().next(), Some("second,seek_destinations,forward_skips"));
}

#[test]
fn analysis_flags_change_the_grouping() {
    let dir = tempfile::tempdir().unwrap();
    assert!(quizcram(&["generate-logs", "--out", path(dir.path())]).status.success());
    let logs = dir.path().join("logs");
    let course = dir.path().join("course.json");
    let run = |threshold: &str| {
        let out =
            quizcram(&["analyze", "--logs", path(&logs), "--course", path(&course), "--merge-threshold-ms", threshold]);
        assert!(out.status.success());
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v["overall"]["total_chains"].as_u64().unwrap() + v["overall"]["zero_displacement_chains"].as_u64().unwrap()
    };
    // A 1 ms threshold never merges, so every seek is its own chain.
    assert!(run("1") > run("5000"));
}

#[test]
fn convert_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let src = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/examples/intro_course.json");
    let manifest = dir.path().join("manifest.json");
    let out = quizcram(&["convert", src, "--output", path(&manifest)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = quizcram(&["validate", path(&manifest)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok: 2 videos, 3 segments, 3 questions");

    let mut m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    m["segments"][1]["start_s"] = 45.into();
    m["questions"][0]["options"] = Value::Array(vec![]);
    fs::write(&manifest, m.to_string()).unwrap();
    let out = quizcram(&["validate", path(&manifest)]);
    assert_eq!(out.status.code(), Some(1));
    let report = String::from_utf8_lossy(&out.stdout);
    assert_eq!(report.lines().count(), 2, "{report}");
}

#[test]
fn bad_input_is_reported() {
    let out = quizcram(&["convert", "/nonexistent/course.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reading"));
}
