use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mocp_cli::output::read_csv;

fn mocp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mocp")).args(args).current_dir(dir).output().expect("spawn mocp")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn run_ok(args: &[&str], dir: &Path) -> String {
    let o = mocp(args, dir);
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir_all(d.join("a")).unwrap();
    fs::create_dir_all(d.join("b")).unwrap();
    let cfg = write_cfg(d, "g.cfg", "grid_n = 8\nref_te = 5\n");
    run_ok(&["generate", "--config", &cfg, "--seed", "3", "--out", "a"], d);
    run_ok(&["generate", "--config", &cfg, "--seed", "3", "--out", "b"], d);
    let a = fs::read(d.join("a/snapshots.txt")).unwrap();
    assert_eq!(a, fs::read(d.join("b/snapshots.txt")).unwrap());
    fs::create_dir_all(d.join("c")).unwrap();
    run_ok(&["generate", "--config", &cfg, "--seed", "4", "--out", "c"], d);
    assert_ne!(a, fs::read(d.join("c/snapshots.txt")).unwrap());
}

#[test]
fn default_reference_window_gives_1201_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_cfg(d, "g.cfg", "grid_n = 8\n");
    let out = run_ok(&["generate", "--config", &cfg], d);
    assert!(out.contains("1201 snapshots"), "{out}");
    let text = fs::read_to_string(d.join("snapshots.txt")).unwrap();
    assert!(text.starts_with("# mocp "));
    assert!(text.contains("snapshots=1201"));
}

#[test]
fn missing_output_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_cfg(d, "g.cfg", "grid_n = 8\n");
    let o = mocp(&["generate", "--config", &cfg, "--out", "nowhere/deeper"], d);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_key_and_missing_config_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_cfg(d, "bad.cfg", "grid_n = 8\nmystery = 1\n");
    let o = mocp(&["generate", "--config", &cfg], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mystery"));
    assert_eq!(code(&mocp(&["pod", "--config", "absent.cfg"], d)), 2);
}

fn spectrum(d: &Path) -> (Vec<f64>, Vec<f64>) {
    let t = read_csv(&d.join("spectrum.csv")).unwrap();
    (t.floats("sigma").unwrap().unwrap(), t.floats("eps").unwrap().unwrap())
}

#[test]
fn noise_free_surrogate_has_two_modes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_cfg(d, "p.cfg", "grid_n = 8\nnoise = 0\nref_te = 20\neps_target = 0.999999\n");
    run_ok(&["generate", "--config", &cfg], d);
    let out = run_ok(&["pod", "--config", &cfg], d);
    assert!(out.contains("l = 2 "), "{out}");
}

#[test]
fn full_energy_keeps_the_numerical_rank_and_eps_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_cfg(d, "p.cfg", "grid_n = 8\nref_te = 2\neps_target = 1.0\n");
    run_ok(&["generate", "--config", &cfg], d);
    let out = run_ok(&["pod", "--config", &cfg], d);
    let (sigma, eps) = spectrum(d);
    let rank = sigma.iter().filter(|s| **s > sigma[0] * 1e-12).count();
    assert!(out.contains(&format!("l = {rank} ")), "{out} vs rank {rank}");
    assert!(eps.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*eps.last().unwrap(), 1.0);
}

#[test]
fn constant_snapshots_are_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let col = ["1e0"; 18].join(" ");
    let text = format!("nodes=9\nsnapshots=3\ndt=1e-1\ngamma_c=1e0\n{col}\nnone\n0e0 0e0 0e0\n{col}\n{col}\n{col}\n");
    fs::write(d.join("snapshots.txt"), text).unwrap();
    let cfg = write_cfg(d, "p.cfg", "grid_n = 3\n");
    let o = mocp(&["pod", "--config", &cfg], d);
    assert_eq!(code(&o), 3, "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn convex_pair_front_lies_on_the_analytic_curve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_cfg(d, "s.cfg", "problem = convex-pair\nh_par = 0.05\nh_perp = 0.05\n");
    run_ok(&["solve", "--config", &cfg], d);
    let t = read_csv(&d.join("pareto_front.csv")).unwrap();
    let (j1, j2) = (t.floats("J1").unwrap().unwrap(), t.floats("J2").unwrap().unwrap());
    assert!(j1.len() > 5);
    for (a, b) in j1.iter().zip(&j2) {
        assert!((a.sqrt() + b.sqrt() - 1.0).abs() < 1e-3, "{a} {b}");
    }
    let set = read_csv(&d.join("pareto_set.csv")).unwrap();
    assert!(set.column("x0").is_some());
    assert!(d.join("trace.csv").is_file() && d.join("counters.csv").is_file());
}

#[test]
fn subdivision_boxes_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir_all(d.join("a")).unwrap();
    fs::create_dir_all(d.join("b")).unwrap();
    let cfg = write_cfg(d, "s.cfg", "problem = convex-pair\nsolver = subdivision\nq = 6\n");
    run_ok(&["solve", "--config", &cfg, "--out", "a"], d);
    run_ok(&["solve", "--config", &cfg, "--out", "b", "--threads", "2"], d);
    // The provenance line hashes the thread count; the boxes must not depend on it.
    let body = |p: &str| fs::read_to_string(d.join(p)).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body("a/boxes.csv"), body("b/boxes.csv"));
}

#[test]
fn validate_needs_control_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_cfg(d, "v.cfg", "grid_n = 8\ncontrol = nodal\n");
    fs::write(d.join("pareto_front.csv"), "index,J1,J2\n0,1e0,1e0\n").unwrap();
    fs::write(d.join("pareto_set.csv"), "index,x0\n0,0e0\n").unwrap();
    let o = mocp(&["validate", "--config", &cfg], d);
    assert_eq!(code(&o), 5, "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_control_validation_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_cfg(d, "v.cfg", "grid_n = 8\nref_te = 20\ncontrol = sinusoid\n");
    fs::write(d.join("pareto_front.csv"), "index,J1,J2\n0,1e0,0e0\n").unwrap();
    fs::write(d.join("pareto_set.csv"), "index,A,omega,tau\n0,0e0,0e0,0e0\n").unwrap();
    run_ok(&["validate", "--config", &cfg], d);
    let t = read_csv(&d.join("validation.csv")).unwrap();
    let trunc = t.floats("truncation").unwrap().unwrap();
    let full = t.floats("J1_highfi").unwrap().unwrap();
    let proj = t.floats("J1_projected").unwrap().unwrap();
    assert!(trunc[0] > 0.0 && trunc[0] < full[0]);
    assert!((proj[0] + trunc[0] - full[0]).abs() <= 1e-6 * full[0]);
    assert_eq!(t.floats("J2").unwrap().unwrap()[0], 0.0);
    assert!(fs::read_to_string(d.join("validation.csv")).unwrap().starts_with("# mocp 0.1.0 config="));
}
