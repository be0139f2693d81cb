//! End-to-end CLI behavior: exit codes, schema round-trips, and the
//! determinism of `verify` reports.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plaplab"))
}

fn tmp(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("plaplab-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn cone_command_matches_model_case() {
    let out = bin()
        .args(["cone", "--spectrum", "-0.5,-0.5,0.5,0.5,0.5,0.5", "--p", "4"])
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("membership: true"), "{text}");
    assert!(text.contains("2.0"), "{text}");
}

#[test]
fn empty_config_file_is_a_config_error() {
    let path = tmp("empty.json");
    std::fs::write(&path, "").unwrap();
    let out = bin()
        .args(["wolff", "--config"])
        .arg(&path)
        .args(["--point", "0.3,0,0,0", "--p", "2.5", "--radius", "1.0"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_file(&path).ok();
}

#[test]
fn unknown_suite_exits_with_config_error() {
    let out = bin().args(["verify", "--suite", "nonexistent"]).output().expect("binary runs");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_rejected() {
    let path = tmp("badkeys.json");
    std::fs::write(&path, r#"{"type":"atomic","points":[[0,0,0]],"weights":[1.0],"extra":1}"#)
        .unwrap();
    let out = bin()
        .args(["wolff", "--config"])
        .arg(&path)
        .args(["--point", "0.5,0,0", "--p", "2.0", "--radius", "1.0"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_file(&path).ok();
}

#[test]
fn capacity_preset_reports_oracle_and_error() {
    let out_path = tmp("cap.json");
    let out = bin()
        .args([
            "capacity", "--preset", "spherical", "--n", "3", "--p", "2", "--r", "1", "--big-r",
            "2", "--h", "0.125",
        ])
        .args(["--out"])
        .arg(&out_path)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let oracle = report["oracle"].as_f64().unwrap();
    assert!((oracle - 8.0 * std::f64::consts::PI).abs() < 1e-9);
    assert!(report["relative_error"].as_f64().unwrap() < 0.25);
    assert!(report["provenance"]["config_hash"].is_string());
    std::fs::remove_file(&out_path).ok();
}

/// Identical config and seed produce byte-identical reports apart from the
/// timestamp field.
#[test]
fn verify_all_quick_is_deterministic() {
    let out_a = tmp("verify-a.json");
    let out_b = tmp("verify-b.json");
    for out_path in [&out_a, &out_b] {
        let out = bin()
            .args(["verify", "--suite", "all", "--quick", "--seed", "0", "--out"])
            .arg(out_path)
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "verify failed:\n{}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let normalize = |path: &PathBuf| -> String {
        let text = std::fs::read_to_string(path).unwrap();
        // strip the timestamp line; everything else must match exactly
        text.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n")
    };
    let a = normalize(&out_a);
    let b = normalize(&out_b);
    assert_eq!(a, b, "verify reports differ beyond the timestamp");
    // schema round-trip: the emitted report re-parses
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_a).unwrap()).unwrap();
    assert_eq!(parsed["all_passed"], serde_json::Value::Bool(true));
    assert_eq!(parsed["criteria"].as_array().unwrap().len(), 10);
    std::fs::remove_file(&out_a).ok();
    std::fs::remove_file(&out_b).ok();
}

#[test]
fn verify_single_suite_runs() {
    let out = bin()
        .args(["verify", "--suite", "model-spectra", "--seed", "0"])
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[PASS] criterion  1"), "{text}");
}
