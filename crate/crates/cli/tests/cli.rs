use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn skm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skm"))
        .args(args)
        .arg("-o")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json"))).unwrap()).unwrap()
}

#[test]
fn gap_check_passes_and_fails_by_cutoff() {
    let dir = tempdir().unwrap();
    let ok = skm(&["gap-check", "--case", "heat", "--set", "lipschitz=1"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let s = summary(dir.path(), "gap-check");
    assert_eq!(s["reports"][0]["gap_value"].as_f64(), Some(0.8));
    assert_eq!(s["config"]["lipschitz"], "1");

    let bad = skm(&["gap-check", "--case", "heat", "--cutoff", "1", "--set", "lipschitz=1"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(summary(dir.path(), "gap-check")["pass"], Value::Bool(false));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# wave gap\ncase = wave\nnu = 1e-4   # small mass\nseed = 7\ncutoff = 2\n").unwrap();
    let out = skm(&["gap-check", "-c", cfg.to_str().unwrap(), "--seed", "9"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "gap-check");
    assert_eq!(s["config"]["seed"], "9");
    assert_eq!(s["config"]["case"], "wave");
    assert_eq!(s["reports"][0]["case"], "wave");
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout, s);
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["manifold-dist", "--nu", "0.05"],
        &["gap-check", "--set", "bogus=1"],
        &["gap-check", "--set", "modes=abc"],
        &["stationary", "--set", "stationary_replicas=10"],
        &["gap-check", "--set", "f_amplitude=2"],
    ];
    for args in cases {
        let out = skm(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = skm(&["gap-check", "-c", "/nonexistent/run.cfg"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unconverged_solve_exits_with_three() {
    let dir = tempdir().unwrap();
    let out = skm(&["manifold", "--set", "max_iters=1"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn manifold_writes_csv_and_summary() {
    let dir = tempdir().unwrap();
    let out = skm(&["manifold", "--modes", "8", "--set", "grid_points=3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("manifold.csv")).unwrap();
    assert!(csv.starts_with("base,graph_norm"));
    assert_eq!(csv.lines().count(), 1 + 5);
    let s = summary(dir.path(), "manifold");
    assert_eq!(s["config"]["modes"], "8");
    assert_eq!(s["contraction_pass"], Value::Bool(true));
}

#[test]
fn consistency_without_nonlinearity_is_exact() {
    let dir = tempdir().unwrap();
    let out = skm(&["consistency", "--modes", "8", "--set", "f=zero"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "consistency");
    assert_eq!(s["report"]["discrepancy"].as_f64(), Some(0.0));
}

#[test]
fn sk_control_has_no_exceedance() {
    let dir = tempdir().unwrap();
    let out = skm(
        &["sk", "--modes", "8", "--replicas", "4", "--set", "f=zero", "--set", "q_law=zero", "--sequential"],
        dir.path(),
    );
    // all-zero exceedances are not strictly decreasing
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "sk");
    for row in s["rows"].as_array().unwrap() {
        assert_eq!(row["exceedance"].as_f64(), Some(0.0));
    }
    assert_eq!(s["config"]["parallel"], "false");
}
