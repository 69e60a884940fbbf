use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eigenset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigenset")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn last_row(path: &Path) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn simulate_diagonal_ray() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = eigenset(&["simulate", "--scenario", "bundled:example1", "--x0", "1,1", "--control", "1:1", "--t", "1", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row = last_row(&dir.path().join("trajectory.csv"));
    let e2 = 1f64.exp().powi(2);
    assert!((row[0] - 1.0).abs() < 1e-15);
    assert!((row[1] - e2).abs() < 1e-12 * e2 && (row[2] - e2).abs() < 1e-12 * e2);

    let o = eigenset(&["simulate", "--scenario", "bundled:example1", "--x0", "1,1", "--control", "1:1", "--t", "0", "--out", out]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn simulate_random_control_against_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = eigenset(&[
        "simulate", "--scenario", "bundled:example2", "--x0", "0.4,-1.2", "--random-segments", "7", "--t", "5", "--out", out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(text.starts_with("t,x1,x2,error"));
    for line in text.lines().skip(1) {
        let err: f64 = line.split(',').last().unwrap().parse().unwrap();
        assert!(err <= 1e-8);
    }
}

#[test]
fn pipeline_is_deterministic_and_writes_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = eigenset(&["pipeline", "--scenario", "bundled:trivial", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    }
    for name in ["arcs.csv", "rate.csv", "eigenset.csv", "verification.csv", "eigenset.svg", "summary.txt"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
    let summary = fs::read_to_string(a.path().join("summary.txt")).unwrap();
    assert!(summary.contains("rate: [0.000000000, 0.000000000]"));
    assert!(summary.contains("status: pass"));
}

#[test]
fn pipeline_reports_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wrong.toml");
    let text = include_str!("../scenarios/trivial.toml").replace("rate = 0.0", "rate = 1.0");
    fs::write(&path, text).unwrap();
    let o = eigenset(&["pipeline", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("check failed"));
}

#[test]
fn usage_and_parse_errors_exit_two() {
    assert_eq!(code(&eigenset(&["pipeline"])), 2);
    assert_eq!(code(&eigenset(&["frobnicate"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "name = \"bad\"\n[system]\na = [[1.0]]\nb = [[[1.0]]]\nu_lo = [0.0]\nu_hi = [1.0]\nbogus = 3\n").unwrap();
    let o = eigenset(&["accessibility", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = eigenset(&["accessibility", "--scenario", "bundled:example1", "--grid", "3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn construct_verify_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = eigenset(&["construct", "--scenario", "bundled:example1", "--rate", "2", "--from", "1,1", "--grid", "256", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let set = dir.path().join("eigenset.csv");
    let set_arg = set.to_str().unwrap();
    let o = eigenset(&["verify", "--scenario", "bundled:example1", "--set", set_arg, "--rate", "2", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = eigenset(&["verify", "--scenario", "bundled:example1", "--set", set_arg, "--rate", "2.5", "--out", out]);
    assert_eq!(code(&o), 1);

    let svg = dir.path().join("plots/d.svg");
    let o = eigenset(&["plot", "--input", set_arg, "--out", svg.to_str().unwrap(), "--axes"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("<polygon"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "theta,rho\n").unwrap();
    let o = eigenset(&["plot", "--input", empty.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
}

#[test]
fn arcs_and_rate_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = eigenset(&["arcs", "--scenario", "bundled:example1", "--out", out]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[45.00°, 90.00°]") && stdout.contains("[225.00°, 270.00°]"), "{stdout}");
    let o = eigenset(&["rate", "--scenario", "bundled:example2", "--ray", "-0.3,0.8", "--budget", "20000"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("[2.000000000000, 2.000000000000]"));
}
