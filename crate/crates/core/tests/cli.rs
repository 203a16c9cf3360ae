use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gradplast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradplast"))
        .args(args)
        .output()
        .expect("spawn gradplast")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const SMALL: &str = "\
grid.n = 4
grid.dirichlet_faces = y- y+
material.mu = 1
material.lambda = 1
material.lc = 0.3
material.sigma0 = 0.05
hardening.kind = isotropic
hardening.k2 = 0.2
slip.systems = 1 0 0  0 1 0
load.steps = 3
load.shear_rate = 0.2
";

#[test]
fn zero_load_run_writes_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zero.conf", &SMALL.replace("load.shear_rate = 0.2", "load.shear_rate = 0\nload.body_force_rate = 0"));
    let out = dir.path().join("out");
    let o = gradplast(&["run", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("step,time"));
    for row in &lines[1..] {
        for v in row.split(',').skip(4) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{row}");
        }
    }
}

#[test]
fn shear_scenario_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("shear");
    let o = gradplast(&["run", scenario("shear.conf").to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    // g(1) = 0.3: γ = (0.3 - 0.1) / 1.5
    let snap = std::fs::read_to_string(out.join("step_00050_gamma.txt")).unwrap();
    let mut lines = snap.lines();
    assert!(lines.next().unwrap().starts_with("gradplast-field v1 slip 8 8 8"));
    let expect = 0.2 / 1.5;
    for l in lines {
        let g: f64 = l.trim().parse().unwrap();
        assert!((g - expect).abs() <= 1e-6, "{g} vs {expect}");
    }
    assert!(out.join("step_00010_eta.txt").exists());
    assert!(!out.join("step_00005_u.txt").exists());
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.conf", SMALL);
    let blocker = write(dir.path(), "file", "");
    let target = blocker.join("sub");
    let o = gradplast(&["run", cfg.to_str().unwrap(), "--output", target.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("error"));
}

#[test]
fn missing_config_exits_one() {
    let o = gradplast(&["run", "/nonexistent/scenario.conf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("/nonexistent/scenario.conf"));
}

#[test]
fn zero_hardening_exits_three_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "soft.conf", &SMALL.replace("hardening.k2 = 0.2", "hardening.k2 = 0"));
    let o = gradplast(&["run", cfg.to_str().unwrap(), "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let e = text(&o.stderr);
    assert!(e.contains("line 8") && e.contains("hardening.k2"), "{e}");
}

#[test]
fn probe_without_length_scale_reports_reduced_norm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.conf",
        &SMALL.replace("material.lc = 0.3", "material.lc = 0").replace("load.steps = 3", "load.steps = 1\nprobe.samples = 50"),
    );
    let o = gradplast(&["probe", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let s = text(&o.stdout);
    assert!(s.contains("reduced") && s.trim_end().ends_with("PASS"), "{s}");
}

#[test]
fn probe_is_repeatable() {
    let p = scenario("probe.conf");
    let a = gradplast(&["probe", p.to_str().unwrap()]);
    let b = gradplast(&["probe", p.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", text(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(text(&a.stdout).contains("seed 7"));
}

#[test]
fn verify_passes_and_detects_corruption() {
    let ok = gradplast(&["verify"]);
    assert_eq!(ok.status.code(), Some(0), "{}{}", text(&ok.stdout), text(&ok.stderr));
    assert!(!text(&ok.stdout).contains("FAIL"));
    let bad = gradplast(&["verify", "--corrupt-curl"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(text(&bad.stdout).contains("FAIL"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.conf", SMALL);
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}"));
        let o = gradplast(&["run", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        runs.push(std::fs::read(out.join("summary.csv")).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}
