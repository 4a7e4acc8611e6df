use std::fs;
use std::path::{Path, PathBuf};

use pfmpm_core::config::{OutputConfig, SimConfig};
use pfmpm_core::diagnostics::{rayleigh_speed, track_tip, Frame, TipSpec};
use pfmpm_core::math::Vec2;
use pfmpm_core::output::{OutputWriter, ENERGY_HEADER};
use pfmpm_core::solver::{run, Simulation};

fn configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

const BLOCK: &str = r#"
    [grid]
    extent = [12.0, 8.0]
    h = 1.0

    [[materials]]
    name = "m"
    E = 1000.0
    nu = 0.3
    rho = 1.0
    l0 = 1.0
    Gc = 1.0

    [[bodies]]
    name = "block"
    material = "m"
    shape = { kind = "rectangle", min = [3.0, 2.0], max = [9.0, 6.0] }
    velocity_gradient = [[0.002, 0.0], [0.0, 0.0]]
    velocity_origin = [6.0, 4.0]
"#;

#[test]
fn bundled_configs_round_trip() {
    let paths = configs();
    assert_eq!(paths.len(), 5);
    for p in paths {
        let cfg = SimConfig::load(&p).unwrap();
        let again = SimConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again, "{}", p.display());
        cfg.build().unwrap();
    }
}

#[test]
fn plate_impact_config_keeps_reference_material() {
    let cfg = SimConfig::load(&configs().into_iter().find(|p| p.ends_with("puil_scaled.toml")).unwrap()).unwrap();
    let m = &cfg.materials[0];
    assert_eq!((m.e, m.nu, m.rho, m.gc), (32000.0, 0.2, 2450.0, 0.003));
    assert_eq!(cfg.grid.order, 2);
    assert_eq!(cfg.cell_density, 3);
}

fn run_into(dir: &Path, steps: usize, stride: usize) -> OutputWriter {
    let cfg = SimConfig::parse(BLOCK).unwrap();
    let mut sim = Simulation::new(cfg.build().unwrap()).unwrap();
    let out = OutputConfig {
        snapshot_stride: stride,
        c_min_output: Some(0.05),
        ..cfg.output.clone()
    };
    let mut w = OutputWriter::new(dir.to_path_buf(), out, steps).unwrap();
    run(&mut sim, steps, &mut w).unwrap();
    w
}

#[test]
fn snapshot_schedule_and_energy_history() {
    let dir = tempfile::tempdir().unwrap();
    let w = run_into(dir.path(), 10, 4);
    assert_eq!(w.snapshots, vec![0, 4, 8, 10]);
    for s in [0, 4, 8, 10] {
        assert!(dir.path().join(format!("snapshot_{s:06}.csv")).exists());
        assert!(dir.path().join(format!("snapshot_{s:06}.vtk")).exists());
    }
    assert!(!dir.path().join("snapshot_000005.csv").exists());
    let energy = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let lines: Vec<&str> = energy.lines().collect();
    assert_eq!(lines[0], ENERGY_HEADER);
    assert_eq!(lines.len(), 12);
    let times: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert!(energy.chars().all(|c| c != ';'));
}

#[test]
fn zero_steps_writes_initial_snapshot_only() {
    let dir = tempfile::tempdir().unwrap();
    let w = run_into(dir.path(), 0, 4);
    assert_eq!(w.snapshots, vec![0]);
    let energy = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 2);
}

#[test]
fn outputs_are_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_into(a.path(), 6, 3);
    run_into(b.path(), 6, 3);
    for name in [
        "energy.csv",
        "snapshot_000006.csv",
        "snapshot_000006.vtk",
        "constraints.csv",
    ] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

const PLATE: &str = r#"
    [grid]
    extent = [54.0, 24.0]
    h = 1.0

    [[materials]]
    name = "glass"
    E = 32000.0
    nu = 0.2
    rho = 2450.0
    l0 = 1.0
    Gc = 0.003
    plane = "plane-strain"

    [[bodies]]
    name = "plate"
    material = "glass"
    shape = { kind = "rectangle", min = [2.0, 2.0], max = [52.0, 22.0] }

    [[precracks]]
    a = [2.0, 12.0]
    b = [27.0, 12.0]

    [[loads.tractions]]
    band_min = [2.0, 21.0]
    band_max = [52.0, 22.0]
    traction = [0.0, 1.0]
    edge = "top"

    [[loads.tractions]]
    band_min = [2.0, 2.0]
    band_max = [52.0, 3.0]
    traction = [0.0, -1.0]
    edge = "bottom"

    [solver]
    dt = 0.1
"#;

#[test]
fn plate_impact_tip_speed_below_rayleigh() {
    let cfg = SimConfig::parse(PLATE).unwrap();
    let mut sim = Simulation::new(cfg.build().unwrap()).unwrap();
    let c_r = rayleigh_speed(&sim.materials[0]);
    assert!((c_r - 2.125).abs() < 0.02, "{c_r}");
    let spec = TipSpec {
        axis: 0,
        seed_min: Vec2::new(22.0, 8.0),
        seed_max: Vec2::new(30.0, 16.0),
        c_threshold: 0.5,
        field: None,
    };
    let mut frames = vec![Frame::capture(sim.t, &sim.points)];
    for _ in 0..40 {
        for _ in 0..10 {
            sim.step().unwrap();
        }
        frames.push(Frame::capture(sim.t, &sim.points));
    }
    let track = track_tip(&frames, &spec);
    assert!(!track.is_empty());
    let advance = track.last().unwrap().tip_position - track[0].tip_position;
    assert!(advance > 1.0, "crack did not propagate: {advance} mm");
    let vmax = track.iter().map(|s| s.tip_speed).fold(0.0, f64::max);
    assert!(vmax < c_r, "tip speed {vmax} mm/us exceeds the Rayleigh speed {c_r}");
}
