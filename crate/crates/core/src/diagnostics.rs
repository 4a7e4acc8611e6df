//! Post-processing: crack-tip tracking, fragment counting, Rayleigh speed.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::domain::{Material, MaterialPoint};
use crate::math::Vec2;

/// The part of a material point that diagnostics need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotPoint {
    pub field: usize,
    pub x: Vec2,
    pub c: f64,
    /// Lattice spacing of the point.
    pub spacing: f64,
}

impl From<&MaterialPoint> for SnapshotPoint {
    fn from(p: &MaterialPoint) -> Self {
        Self {
            field: p.field,
            x: p.x,
            c: p.c,
            spacing: p.spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub points: Vec<SnapshotPoint>,
}

impl Frame {
    pub fn capture(t: f64, points: &[MaterialPoint]) -> Self {
        Self {
            t,
            points: points.iter().map(SnapshotPoint::from).collect(),
        }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so labels do not depend on visiting order.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Connected components of `pts` with links between points closer than
/// `link_factor × spacing`. Returns a component label per point.
fn components(pts: &[&SnapshotPoint], link_factor: f64) -> Vec<usize> {
    let n = pts.len();
    let mut uf = UnionFind::new(n);
    let r = pts.iter().map(|p| p.spacing).fold(0.0, f64::max) * link_factor;
    if n == 0 || r <= 0.0 {
        return (0..n).collect();
    }
    let key = |x: &Vec2| ((x[0] / r).floor() as i64, (x[1] / r).floor() as i64);
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        cells.entry(key(&p.x)).or_default().push(i);
    }
    for (i, p) in pts.iter().enumerate() {
        let (cx, cy) = key(&p.x);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = cells.get(&(cx + dx, cy + dy)) {
                    for &j in list {
                        if j > i {
                            let link = link_factor * p.spacing.max(pts[j].spacing);
                            if (p.x - pts[j].x).norm() <= link {
                                uf.union(i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    (0..n).map(|i| uf.find(i)).collect()
}

/// Number of fragments per field: connected components of points with
/// `c ≥ c_threshold`, linked within `link_factor` lattice spacings.
pub fn count_fragments(points: &[SnapshotPoint], c_threshold: f64, link_factor: f64) -> Vec<usize> {
    let n_fields = points.iter().map(|p| p.field + 1).max().unwrap_or(0);
    (0..n_fields)
        .map(|f| {
            let alive: Vec<&SnapshotPoint> = points.iter().filter(|p| p.field == f && p.c >= c_threshold).collect();
            let mut labels = components(&alive, link_factor);
            labels.sort_unstable();
            labels.dedup();
            labels.len()
        })
        .collect()
}

pub const FRAGMENT_THRESHOLD: f64 = 0.05;
pub const LINK_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipTrack {
    pub t: f64,
    pub tip_position: f64,
    pub tip_speed: f64,
    /// False when the tip retreated relative to the previous sample.
    pub monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipSpec {
    pub axis: usize,
    pub seed_min: Vec2,
    pub seed_max: Vec2,
    pub c_threshold: f64,
    pub field: Option<usize>,
}

/// Tip coordinate of one frame: the extremal (largest) coordinate along the
/// axis over damaged points connected to a damaged point in the seed box.
pub fn tip_position(frame: &Frame, spec: &TipSpec) -> Option<f64> {
    let damaged: Vec<&SnapshotPoint> = frame
        .points
        .iter()
        .filter(|p| p.c < spec.c_threshold && spec.field.is_none_or(|f| f == p.field))
        .collect();
    let labels = components(&damaged, LINK_FACTOR);
    let in_seed = |x: &Vec2| (0..2).all(|a| x[a] >= spec.seed_min[a] && x[a] <= spec.seed_max[a]);
    let seeds: Vec<usize> = damaged
        .iter()
        .zip(&labels)
        .filter(|(p, _)| in_seed(&p.x))
        .map(|(_, &l)| l)
        .collect();
    damaged
        .iter()
        .zip(&labels)
        .filter(|(_, l)| seeds.contains(l))
        .map(|(p, _)| p.x[spec.axis])
        .reduce(f64::max)
}

/// Least-squares slope over a window of up to `WINDOW` samples centred on
/// each sample (one-sided at the ends).
pub const WINDOW: usize = 5;

fn windowed_slope(t: &[f64], y: &[f64], i: usize) -> f64 {
    let n = t.len();
    if n < 2 {
        return 0.0;
    }
    let half = WINDOW / 2;
    let lo = i.saturating_sub(half).min(n.saturating_sub(WINDOW));
    let hi = (lo + WINDOW).min(n);
    let (ts, ys) = (&t[lo..hi], &y[lo..hi]);
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let num: f64 = ts.iter().zip(ys).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let den: f64 = ts.iter().map(|a| (a - tm).powi(2)).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Tip positions and smoothed speeds over time-ordered frames. Frames with
/// no damaged points in the seed region are skipped.
pub fn track_tip(frames: &[Frame], spec: &TipSpec) -> Vec<TipTrack> {
    let samples: Vec<(f64, f64)> = frames
        .par_iter()
        .filter_map(|f| tip_position(f, spec).map(|x| (f.t, x)))
        .collect();
    let t: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    (0..samples.len())
        .map(|i| TipTrack {
            t: t[i],
            tip_position: y[i],
            tip_speed: windowed_slope(&t, &y, i),
            monotone: i == 0 || y[i] >= y[i - 1],
        })
        .collect()
}

/// Rayleigh surface-wave speed of an isotropic solid, mm/µs: the root in
/// (0, 1) of `x³ − 8x² + (24 − 16/κ²)x + 16(1/κ² − 1)` with `x = (c_R/c_s)²`
/// and `κ = c_p/c_s` from the three-dimensional moduli.
pub fn rayleigh_speed(m: &Material) -> f64 {
    let mu = m.e / (2.0 * (1.0 + m.nu));
    let cs2 = mu / m.rho;
    let k2 = 2.0 * (1.0 - m.nu) / (1.0 - 2.0 * m.nu);
    let f = |x: f64| x * x * x - 8.0 * x * x + (24.0 - 16.0 / k2) * x + 16.0 * (1.0 / k2 - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi) * cs2).sqrt()
}
