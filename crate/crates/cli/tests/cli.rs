use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_acoustolab"));
    c.env_remove("ACOUSTOLAB_WORKERS");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn summary(out: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("summary_{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

const SQUARE: &str = r#""domain": {"kind": "rectangle", "lx": 1.0, "ly": 1.0}"#;
const BALL: &str =
    r#""damping": {"kind": "ball", "center": [0.5, 0.5], "radius": 0.1, "amplitude": 5.0, "smoothness_exponent": 0.0}"#;

#[test]
fn undamped_simulation_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(r#"{{{SQUARE}, "resolution": [16, 16], "simulate": {{"t_final": 2.0, "dt": 0.01, "seed": 4}}}}"#),
    );
    let o = run(&["simulate"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path(), "simulate");
    let r = &s["result"];
    let e0 = r["initial_energy"].as_f64().unwrap();
    assert!(r["energy_identity_residual_max"].as_f64().unwrap() <= 1e-11 * e0);
    assert_eq!(s["status"], "ok");
    assert_eq!(s["config"]["simulate"]["dt"], 0.01);
    assert!(s["versions"]["acoustolab"].is_string());
    assert!(s["timings"]["total_s"].is_number());
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,E,Q,residual"));
    assert_eq!(csv.lines().count(), 1 + 201);
}

#[test]
fn gcc_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let disk = write_config(
        dir.path(),
        "disk.json",
        r#"{"domain": {"kind": "disk", "r_out": 1.0},
            "damping": {"kind": "boundary_collar", "width": 0.2, "amplitude": 1.0, "smoothness_exponent": 2.0},
            "gcc": {"samples": 400, "s_max": 20.0}}"#,
    );
    let o = run(&["gcc", "--expect", "satisfied"], &disk, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = summary(dir.path(), "gcc");
    assert_eq!(s["verdict"], "satisfied");
    assert!(s["result"]["worst_escape_time"].as_f64().unwrap() > 0.0);

    let ball = write_config(dir.path(), "ball.json", &format!(r#"{{{SQUARE}, {BALL}, "gcc": {{"samples": 400, "s_max": 20.0}}}}"#));
    assert_eq!(run(&["gcc", "--expect", "violated"], &ball, dir.path()).status.code(), Some(0));
    let o = run(&["gcc", "--expect", "satisfied"], &ball, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let s = summary(dir.path(), "gcc");
    assert_eq!(s["status"], "verdict_failure");
    assert!(!s["result"]["witnesses"].as_array().unwrap().is_empty());
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &format!(r#"{{{SQUARE}, "resolution": [8, 8], "sweep": {{"mu_min": 1.0, "mu_max": 2.0, "mu_stepp": 0.5}}}}"#),
    );
    let o = run(&["resolvent-sweep"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sweep") && err.contains("mu_stepp"), "{err}");

    let cfg = write_config(dir.path(), "neg.json", &format!(r#"{{{SQUARE}, "resolution": [8, 8], "simulate": {{"t_final": -1.0, "dt": 0.1}}}}"#));
    let o = run(&["simulate"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("simulate.t_final"));

    let cfg = write_config(dir.path(), "missing.json", &format!(r#"{{{SQUARE}, "resolution": [8, 8]}}"#));
    let o = run(&["quasimode"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(summary(dir.path(), "quasimode")["status"], "error");

    let o = bin().arg("gcc").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().arg("no-such-command").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn rays_emit_one_polyline_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rays.json",
        r#"{"domain": {"kind": "annulus", "r_in": 0.5, "r_out": 1.0}, "rays": {"samples": 25, "s_max": 5.0, "seed": 3}}"#,
    );
    let o = run(&["rays"], &cfg, dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("rays.csv")).unwrap();
    let mut ids: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    ids.dedup();
    assert_eq!(ids, (0..25).collect::<Vec<_>>());
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 5));
}

#[test]
fn sweep_rows_match_grid_and_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        &format!(r#"{{{SQUARE}, {BALL}, "resolution": [10, 10], "sweep": {{"mu_min": 2.0, "mu_max": 8.0, "mu_step": 0.5, "cap": 1e6}}}}"#),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = run(&["resolvent-sweep", "--expect", "bounded"], &cfg, &a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = bin()
        .args(["resolvent-sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .env("ACOUSTOLAB_WORKERS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(summary(&b, "resolvent-sweep")["workers"], 1);
    let csv_a = std::fs::read(a.join("sweep.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("sweep.csv")).unwrap());
    assert_eq!(String::from_utf8(csv_a).unwrap().lines().count(), 1 + 13);
    assert_eq!(summary(&a, "resolvent-sweep")["result"]["grid_size"], 13);
}

#[test]
fn quasimode_husimi_and_matrix_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "q.json",
        &format!(
            r#"{{{SQUARE}, {BALL}, "resolution": [16, 16], "quasimode": {{"mu": 6.0}},
                "husimi": {{"mu_list": [4.0, 6.0], "x0_stride": 2}}}}"#
        ),
    );
    let o = run(&["quasimode", "--dump-matrix"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path(), "quasimode");
    let n_dof = s["result"]["n_dof"].as_u64().unwrap() as usize;
    let qm = std::fs::read_to_string(dir.path().join("quasimode.csv")).unwrap();
    assert_eq!(qm.lines().count(), 1 + n_dof);
    let matrix = std::fs::read_to_string(dir.path().join("matrix.txt")).unwrap();
    assert!(matrix.starts_with(&format!("# A n={n_dof}")));

    let o = run(&["husimi"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = std::fs::read_to_string(dir.path().join("husimi.csv")).unwrap();
    assert_eq!(h.lines().count(), 3);
    assert_eq!(summary(dir.path(), "husimi")["result"]["entries"].as_array().unwrap().len(), 2);

    let o = run(&["dump-matrix"], &cfg, &dir.path().join("m"));
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("m/matrix.txt")).unwrap(), matrix);
}
