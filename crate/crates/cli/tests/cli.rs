use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pfmpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfmpm"))
        .args(args)
        .env_remove("PFMPM_THREADS")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

#[test]
fn polar_inline_second_order_isotropic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("polar.csv");
    let o = pfmpm(&[
        "polar",
        "--gc",
        "1.0",
        "--l0",
        "0.25",
        "--samples",
        "36",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let s = text(&o);
    assert!(s.contains("min = 1.000 kN/m") && s.contains("max = 1.000 kN/m"), "{s}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("theta_rad,gc,gc_reciprocal"));
    assert_eq!(csv.lines().count(), 37);
}

#[test]
fn polar_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = pfmpm(&[
        "polar",
        fixture("iso.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 91);
}

#[test]
fn simulate_zero_steps_writes_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfmpm(&[
        "simulate",
        fixture("blocks.toml").to_str().unwrap(),
        "--steps",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(dir.path().join("snapshot_000000.csv").exists());
    assert!(!dir.path().join("snapshot_000002.csv").exists());
    let energy = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 2);
}

#[test]
fn simulate_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfmpm(&[
        "--threads",
        "1",
        "simulate",
        fixture("blocks.toml").to_str().unwrap(),
        "--dt",
        "0.005",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    for s in [0, 2, 4] {
        assert!(dir.path().join(format!("snapshot_{s:06}.csv")).exists());
    }
    let energy = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let last = energy.lines().last().unwrap();
    let t: f64 = last.split(',').next().unwrap().parse().unwrap();
    assert!((t - 0.02).abs() < 1e-12, "{last}");
}

#[test]
fn check_passes_on_consistent_contact() {
    let o = pfmpm(&["check", fixture("blocks.toml").to_str().unwrap(), "--steps", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("0 violations"));
}

#[test]
fn check_reports_inverted_normals() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfmpm(&[
        "check",
        fixture("inverted_normals.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("C.1"), "{}", text(&o));
    let report = std::fs::read_to_string(dir.path().join("constraints.csv")).unwrap();
    assert!(report.lines().skip(1).any(|l| l.contains(",C.1,")), "{report}");
}

#[test]
fn config_errors_are_runtime_failures() {
    let o = pfmpm(&["simulate", fixture("dangling.toml").to_str().unwrap(), "--steps", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let s = text(&o);
    assert!(s.contains("orphan") && s.contains("missing"), "{s}");
    let o = pfmpm(&["simulate", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(pfmpm(&[]).status.code(), Some(2));
    assert_eq!(pfmpm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pfmpm(&["simulate", "x.toml", "--dt", "fast"]).status.code(), Some(2));
    assert_eq!(pfmpm(&["polar", "--out", "x.csv"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_pfmpm"))
        .args(["polar", "--gc", "1", "--l0", "1", "--out", "/dev/null"])
        .env("PFMPM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
