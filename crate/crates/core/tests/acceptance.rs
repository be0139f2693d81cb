//! Acceptance gate: one test per verification criterion, each printing a
//! pass/fail line with the measured values. Run with `--nocapture` to see
//! every line; any failure carries the full detail in the panic message.

use plaplab::verify::{run_suite, VerifyOptions};

fn run(name: &str, id: usize) {
    let opts = VerifyOptions { seed: 0, quick: false };
    let report = run_suite(name, &opts).unwrap_or_else(|e| panic!("criterion {id} ({name}): {e}"));
    println!("{}", report.summary_line());
    for line in &report.lines {
        println!("    [{}] {}: {}", if line.pass { "ok" } else { "FAIL" }, line.name, line.detail);
    }
    assert!(
        report.passed,
        "criterion {id} ({name}) failed:\n{}",
        report
            .lines
            .iter()
            .filter(|l| !l.pass)
            .map(|l| format!("  {}: {}", l.name, l.detail))
            .collect::<Vec<_>>()
            .join("\n")
    );
}

#[test]
fn criterion_01_model_spectra() {
    run("model-spectra", 1);
}

#[test]
fn criterion_02_cone_lemmas() {
    run("cones", 2);
}

#[test]
fn criterion_03_wolff_quadrature() {
    run("wolff", 3);
}

#[test]
fn criterion_04_capacity_solver() {
    run("capacity", 4);
}

#[test]
fn criterion_05_level_set_estimate() {
    run("level-set", 5);
}

#[test]
fn criterion_06_km_sandwich() {
    run("km-sandwich", 6);
}

#[test]
fn criterion_07_thinness() {
    run("thinness", 7);
}

#[test]
fn criterion_08_wolff_upper_bound() {
    run("wolff-upper", 8);
}

#[test]
fn criterion_09_conformal_identities() {
    run("conformal", 9);
}

#[test]
fn criterion_10_tightness_experiment() {
    run("tightness", 10);
}
