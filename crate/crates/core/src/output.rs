//! CSV and legacy-VTK writers, and the observer that schedules them.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{OutputConfig, TipConfig};
use crate::contact::Violation;
use crate::diagnostics::{count_fragments, track_tip, Frame, TipSpec, TipTrack, FRAGMENT_THRESHOLD, LINK_FACTOR};
use crate::domain::MaterialPoint;
use crate::math::Vec2;
use crate::solver::{EnergyRecord, Observer, Simulation};
use crate::surface_energy::PolarResult;
use crate::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Nine significant digits, locale independent.
fn num(x: f64) -> String {
    format!("{x:.8e}")
}

macro_rules! wr {
    ($path:expr, $w:expr, $($arg:tt)*) => {
        writeln!($w, $($arg)*).map_err(|e| Error::io($path, e))?
    };
}

pub const ENERGY_HEADER: &str = "t_us,elastic_mJ,fracture_mJ,kinetic_mJ";

pub fn write_energy_history(path: &Path, records: &[EnergyRecord]) -> Result<()> {
    let mut w = create(path)?;
    wr!(path, w, "{ENERGY_HEADER}");
    for r in records {
        wr!(
            path,
            w,
            "{},{},{},{}",
            num(r.t),
            num(r.elastic),
            num(r.fracture),
            num(r.kinetic)
        );
    }
    finish(path, w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotRow {
    pub step: usize,
    pub t: f64,
    pub field_id: usize,
    pub x: f64,
    pub y: f64,
    pub c: f64,
    pub sigma_hydrostatic: f64,
    pub vx: f64,
    pub vy: f64,
    pub h: f64,
}

impl SnapshotRow {
    pub fn new(p: &MaterialPoint, step: usize, t: f64) -> Self {
        Self {
            step,
            t,
            field_id: p.field,
            x: p.x[0],
            y: p.x[1],
            c: p.c,
            sigma_hydrostatic: 0.5 * (p.stress[(0, 0)] + p.stress[(1, 1)]),
            vx: p.v[0],
            vy: p.v[1],
            h: p.history,
        }
    }
}

pub const SNAPSHOT_HEADER: &str = "step,t,field_id,x,y,c,sigma_hydrostatic,vx,vy,H";

/// Rows kept by the filter: all rows when `c_min` is `None`.
pub fn filter_rows(rows: &[SnapshotRow], c_min: Option<f64>) -> Vec<SnapshotRow> {
    rows.iter()
        .filter(|r| c_min.is_none_or(|c| r.c >= c))
        .copied()
        .collect()
}

pub fn write_snapshot_csv(path: &Path, rows: &[SnapshotRow]) -> Result<()> {
    let mut w = create(path)?;
    wr!(path, w, "{SNAPSHOT_HEADER}");
    for r in rows {
        wr!(
            path,
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            num(r.t),
            r.field_id,
            num(r.x),
            num(r.y),
            num(r.c),
            num(r.sigma_hydrostatic),
            num(r.vx),
            num(r.vy),
            num(r.h)
        );
    }
    finish(path, w)
}

/// Legacy ASCII VTK point cloud with the snapshot fields as point data.
pub fn write_snapshot_vtk(path: &Path, rows: &[SnapshotRow]) -> Result<()> {
    let mut w = create(path)?;
    let n = rows.len();
    wr!(path, w, "# vtk DataFile Version 3.0");
    wr!(path, w, "material points");
    wr!(path, w, "ASCII");
    wr!(path, w, "DATASET POLYDATA");
    wr!(path, w, "POINTS {n} double");
    for r in rows {
        wr!(path, w, "{} {} 0", num(r.x), num(r.y));
    }
    wr!(path, w, "VERTICES {n} {}", 2 * n);
    for i in 0..n {
        wr!(path, w, "1 {i}");
    }
    wr!(path, w, "POINT_DATA {n}");
    type Scalar = (&'static str, fn(&SnapshotRow) -> f64);
    let scalars: [Scalar; 4] = [
        ("c", |r| r.c),
        ("sigma_hydrostatic", |r| r.sigma_hydrostatic),
        ("H", |r| r.h),
        ("field_id", |r| r.field_id as f64),
    ];
    for (name, f) in scalars {
        wr!(path, w, "SCALARS {name} double 1");
        wr!(path, w, "LOOKUP_TABLE default");
        for r in rows {
            wr!(path, w, "{}", num(f(r)));
        }
    }
    wr!(path, w, "VECTORS velocity double");
    for r in rows {
        wr!(path, w, "{} {} 0", num(r.vx), num(r.vy));
    }
    finish(path, w)
}

pub const POLAR_HEADER: &str = "theta_rad,gc,gc_reciprocal";

pub fn write_polar(path: &Path, results: &[PolarResult]) -> Result<()> {
    let mut w = create(path)?;
    wr!(path, w, "{POLAR_HEADER}");
    for r in results {
        wr!(path, w, "{},{},{}", num(r.theta), num(r.gc), num(r.gc_reciprocal));
    }
    finish(path, w)
}

pub const CONSTRAINT_HEADER: &str = "step,check,node,field_a,field_b,quantity,magnitude";

pub fn write_constraint_report(path: &Path, violations: &[(usize, Violation)]) -> Result<()> {
    let mut w = create(path)?;
    wr!(path, w, "{CONSTRAINT_HEADER}");
    for (step, v) in violations {
        wr!(
            path,
            w,
            "{step},{},{},{},{},{},{}",
            v.check,
            v.node,
            v.pair.0,
            v.pair.1,
            v.quantity,
            num(v.magnitude)
        );
    }
    finish(path, w)
}

pub const TIP_HEADER: &str = "t_us,tip_mm,speed_mm_per_us";

pub fn write_tip_track(path: &Path, track: &[TipTrack]) -> Result<()> {
    let mut w = create(path)?;
    wr!(path, w, "{TIP_HEADER}");
    for s in track {
        wr!(path, w, "{},{},{}", num(s.t), num(s.tip_position), num(s.tip_speed));
    }
    finish(path, w)
}

pub const FRAGMENT_HEADER: &str = "t_us,field_id,fragments";

pub fn write_fragments(path: &Path, rows: &[(f64, Vec<usize>)]) -> Result<()> {
    let mut w = create(path)?;
    wr!(path, w, "{FRAGMENT_HEADER}");
    for (t, counts) in rows {
        for (f, n) in counts.iter().enumerate() {
            wr!(path, w, "{},{f},{n}", num(*t));
        }
    }
    finish(path, w)
}

impl From<&TipConfig> for TipSpec {
    fn from(t: &TipConfig) -> Self {
        TipSpec {
            axis: t.axis.index(),
            seed_min: Vec2::from(t.seed_min),
            seed_max: Vec2::from(t.seed_max),
            c_threshold: t.c_threshold,
            field: t.field,
        }
    }
}

/// Tip thresholds reported besides the configured one.
pub const TIP_SENSITIVITY: [f64; 3] = [0.3, 0.5, 0.7];

/// Writes scheduled snapshots, the energy history, constraint reports and
/// diagnostics into one directory.
pub struct OutputWriter {
    pub dir: PathBuf,
    pub config: OutputConfig,
    pub n_steps: usize,
    pub tip: Option<TipSpec>,
    pub fragments: bool,
    pub energies: Vec<EnergyRecord>,
    pub violations: Vec<(usize, Violation)>,
    pub snapshots: Vec<usize>,
    frames: Vec<Frame>,
    fragment_rows: Vec<(f64, Vec<usize>)>,
}

impl OutputWriter {
    pub fn new(dir: PathBuf, config: OutputConfig, n_steps: usize) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            config,
            n_steps,
            tip: None,
            fragments: false,
            energies: Vec::new(),
            violations: Vec::new(),
            snapshots: Vec::new(),
            frames: Vec::new(),
            fragment_rows: Vec::new(),
        })
    }

    fn snapshot_due(&self, step: usize) -> bool {
        let s = self.config.snapshot_stride;
        step == 0 || step == self.n_steps || (s > 0 && step.is_multiple_of(s))
    }

    fn write_snapshot(&mut self, sim: &Simulation) -> Result<()> {
        let rows: Vec<SnapshotRow> = sim
            .points
            .iter()
            .map(|p| SnapshotRow::new(p, sim.step, sim.t))
            .collect();
        let stem = format!("snapshot_{:06}", sim.step);
        write_snapshot_csv(&self.dir.join(format!("{stem}.csv")), &rows)?;
        if self.config.vtk {
            let kept = filter_rows(&rows, self.config.c_min_output);
            write_snapshot_vtk(&self.dir.join(format!("{stem}.vtk")), &kept)?;
        }
        self.snapshots.push(sim.step);
        Ok(())
    }

    pub fn energy_path(&self) -> PathBuf {
        self.dir.join("energy.csv")
    }
}

impl Observer for OutputWriter {
    fn observe(&mut self, sim: &Simulation) -> Result<()> {
        if sim.step.is_multiple_of(self.config.energy_stride) || sim.step == self.n_steps {
            self.energies.push(sim.energy);
        }
        for v in &sim.last.violations {
            self.violations.push((sim.step, v.clone()));
        }
        if self.snapshot_due(sim.step) && self.snapshots.last() != Some(&sim.step) {
            self.write_snapshot(sim)?;
            if self.tip.is_some() {
                self.frames.push(Frame::capture(sim.t, &sim.points));
            }
            if self.fragments {
                let frame = Frame::capture(sim.t, &sim.points);
                self.fragment_rows
                    .push((sim.t, count_fragments(&frame.points, FRAGMENT_THRESHOLD, LINK_FACTOR)));
            }
        }
        Ok(())
    }

    fn finish(&mut self, sim: &Simulation) -> Result<()> {
        if self.snapshots.last() != Some(&sim.step) {
            self.write_snapshot(sim)?;
        }
        write_energy_history(&self.energy_path(), &self.energies)?;
        write_constraint_report(&self.dir.join("constraints.csv"), &self.violations)?;
        if let Some(spec) = self.tip {
            write_tip_track(&self.dir.join("tip.csv"), &track_tip(&self.frames, &spec))?;
            let path = self.dir.join("tip_sensitivity.csv");
            let mut w = create(&path)?;
            wr!(&path, w, "c_threshold,samples,max_speed_mm_per_us");
            for c in TIP_SENSITIVITY {
                let track = track_tip(&self.frames, &TipSpec { c_threshold: c, ..spec });
                let vmax = track.iter().map(|s| s.tip_speed).fold(0.0, f64::max);
                wr!(&path, w, "{},{},{}", num(c), track.len(), num(vmax));
            }
            finish(&path, w)?;
        }
        if self.fragments {
            write_fragments(&self.dir.join("fragments.csv"), &self.fragment_rows)?;
        }
        Ok(())
    }
}
