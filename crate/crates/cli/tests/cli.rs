use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn e2i2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_e2i2")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = e2i2(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// `(separation, value)` rows of a curve CSV.
fn read_curve(path: &Path) -> Vec<(f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect()
}

fn report_value(path: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.starts_with(&format!("{key},"))).unwrap();
    line.split(',').nth(1).unwrap().parse().unwrap()
}

/// A copy of `two_star` with a short Monte Carlo sweep.
fn small_two_star(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(scenario("two_star.scenario")).unwrap().replace("samples = 49", "samples = 9");
    let path = dir.join("small.scenario");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_bundled_scenarios() {
    for s in ["sirius.scenario", "two_star.scenario", "triangle3.scenario"] {
        let out = run_ok(&["--config", scenario(s).to_str().unwrap(), "validate"]);
        assert!(out.contains(": ok"), "{out}");
    }
}

#[test]
fn sirius_curve_has_plateau_one_and_peak_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    run_ok(&["--config", scenario("sirius.scenario").to_str().unwrap(), "--out", o, "analytic"]);
    let c = read_curve(&dir.path().join("sirius_single.csv"));
    assert_eq!(c[0], (0.0, 2.0));
    assert!((c[c.len() - 1].1 - 1.0).abs() < 1e-3);
    let header = fs::read_to_string(dir.path().join("sirius_single.csv")).unwrap();
    assert!(header.starts_with("separation_m,value,variant\n"));
}

#[test]
fn two_star_difference_is_delta() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    run_ok(&["--config", scenario("two_star.scenario").to_str().unwrap(), "--out", o, "analytic"]);
    let e = read_curve(&dir.path().join("two_star_e2i2.csv"));
    let n = read_curve(&dir.path().join("two_star_no-e2i2.csv"));
    let d = read_curve(&dir.path().join("two_star_delta.csv"));
    for ((e, n), d) in e.iter().zip(&n).zip(&d) {
        assert!((e.1 - n.1 - d.1).abs() <= 1e-12 * e.1.abs().max(1.0));
    }
}

#[test]
fn malformed_unit_is_a_field_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("sirius.scenario")).unwrap().replace("\"2e6 km\"", "\"2e6 kilometres\"");
    let path = dir.path().join("bad.scenario");
    fs::write(&path, text).unwrap();
    let out = e2i2(&["--config", path.to_str().unwrap(), "validate"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("source[0].radius") && err.contains("kilometres"), "{err}");
}

#[test]
fn montecarlo_is_deterministic_and_reports_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_two_star(dir.path());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out_a = run_ok(&["--config", cfg, "--out", a.to_str().unwrap(), "--trials", "2e4", "--seed", "42", "montecarlo"]);
    run_ok(&["--config", cfg, "--out", b.to_str().unwrap(), "--trials", "2e4", "--seed", "42", "montecarlo"]);
    assert!(out_a.contains("seed 42") && out_a.contains("acceptance"), "{out_a}");
    for f in ["two_star_mc_two-crystal.csv", "two_star_mc_two-crystal_tally.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let curve = fs::read_to_string(a.join("two_star_mc_two-crystal.csv")).unwrap();
    assert!(curve.lines().nth(1).unwrap() == "separation_m,value,variant,error", "{curve}");
}

#[test]
fn zero_trials_is_a_usage_error() {
    let out = e2i2(&["--config", scenario("two_star.scenario").to_str().unwrap(), "--trials", "0", "montecarlo"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--trials"));
}

#[test]
fn noiseless_two_star_separation() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let cfg = scenario("two_star.scenario");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "--out", o, "analytic"]);
    let delta = dir.path().join("two_star_delta.csv");
    run_ok(&["--config", cfg, "--out", o, "estimate", delta.to_str().unwrap()]);
    let d = report_value(&dir.path().join("two_star_estimate.csv"), "separation");
    assert!((d / (4.0 * 2.0 * 2e9) - 1.0).abs() < 0.01, "{d}");
}

#[test]
fn single_source_delta_has_no_oscillation() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let cfg = scenario("sirius.scenario");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "--out", o, "--variant", "delta", "analytic"]);
    let delta = dir.path().join("sirius_delta.csv");
    let out = e2i2(&["--config", cfg, "--out", o, "estimate", delta.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no oscillation detected"));
}

#[test]
fn sirius_estimate_prints_diameter() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let cfg = scenario("sirius.scenario");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "--out", o, "--plot", "analytic"]);
    assert!(dir.path().join("sirius_single.svg").exists());
    let curve = dir.path().join("sirius_single.csv");
    let out = run_ok(&["--config", cfg, "--out", o, "estimate", curve.to_str().unwrap()]);
    assert!(out.contains("angular_diameter:") && out.contains("first_zero_baseline:"), "{out}");
    let theta = report_value(&dir.path().join("sirius_estimate.csv"), "angular_diameter");
    let truth = 2.0 * 2e9 / (8.611 * 9.460_730_472_580_8e15);
    assert!((theta / truth - 1.0).abs() < 1e-3);
}

#[test]
fn missing_variant_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let cfg = scenario("two_star.scenario");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "--out", o, "--variant", "no-e2i2", "analytic"]);
    let c = dir.path().join("two_star_no-e2i2.csv");
    let out = e2i2(&["--config", cfg, "--out", o, "estimate", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`delta`"));
}

#[test]
fn triangle_center_vectors_from_map() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let cfg = scenario("triangle3.scenario");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "--out", o, "--variant", "delta", "analytic"]);
    let map = dir.path().join("triangle3_delta_map.csv");
    run_ok(&["--config", cfg, "--out", o, "estimate", map.to_str().unwrap()]);
    let report = dir.path().join("triangle3_estimate.csv");
    let kx = report_value(&report, "center_vector_0_1_x");
    let l = 8.611 * 9.460_730_472_580_8e15;
    let truth = -1.6e10 / 550e-9 / l;
    assert!((kx / truth - 1.0).abs() < 0.01, "{kx} vs {truth}");
}

#[test]
fn missing_config_fails() {
    let out = e2i2(&["validate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
