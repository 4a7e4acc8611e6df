//! Material points, materials, body geometry and initial conditions.

use serde::{Deserialize, Serialize};

use crate::bspline::SplineGrid;
use crate::constitutive::{lame_from_engineering, LameParams, PlaneMode};
use crate::math::{Mat2, Vec2};
use crate::phase_field::GammaTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    /// Young's modulus, N/mm².
    pub e: f64,
    pub nu: f64,
    /// Density in internal units.
    pub rho: f64,
    pub l0: f64,
    pub k_f: f64,
    /// Reference toughness Ḡc, N/mm.
    pub gc: f64,
    pub gamma: GammaTensor,
    /// Principal material orientation, radians.
    pub phi: f64,
    pub plane: PlaneMode,
    pub lame: LameParams,
}

impl Material {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        e: f64,
        nu: f64,
        rho: f64,
        l0: f64,
        k_f: f64,
        gc: f64,
        gamma: GammaTensor,
        phi: f64,
        plane: PlaneMode,
    ) -> Result<Self> {
        let name = name.into();
        if !(l0 > 0.0) || !(gc > 0.0) || !(0.0..1.0).contains(&k_f) {
            return Err(Error::InvalidMaterial(format!(
                "{name}: need l0 > 0, Gc > 0 and 0 <= k_f < 1"
            )));
        }
        let lame =
            lame_from_engineering(e, nu, rho, plane).map_err(|err| Error::InvalidMaterial(format!("{name}: {err}")))?;
        Ok(Self {
            name,
            e,
            nu,
            rho,
            l0,
            k_f,
            gc,
            gamma,
            phi,
            plane,
            lame,
        })
    }

    /// Zeroth-order coefficient of the phase-field equation at history `h`.
    pub fn f_coefficient(&self, h: f64) -> f64 {
        4.0 * self.l0 * (1.0 - self.k_f) * h / self.gc + 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialPoint {
    pub field: usize,
    pub material: usize,
    pub x: Vec2,
    pub u: Vec2,
    pub v: Vec2,
    pub a: Vec2,
    pub volume: f64,
    pub mass: f64,
    pub rho: f64,
    pub strain: Mat2,
    pub stress: Mat2,
    pub history: f64,
    pub c: f64,
    pub phi: f64,
    /// Distance between neighbouring lattice points at creation.
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BodyShape {
    Rectangle { min: [f64; 2], max: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
    Ring { center: [f64; 2], inner: f64, outer: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl BodyShape {
    pub fn contains(&self, p: &Vec2) -> bool {
        match self {
            BodyShape::Rectangle { min, max } => p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1],
            BodyShape::Disk { center, radius } => (p - Vec2::from(*center)).norm() <= *radius,
            BodyShape::Ring { center, inner, outer } => {
                let r = (p - Vec2::from(*center)).norm();
                r >= *inner && r <= *outer
            }
            BodyShape::Polygon { vertices } => {
                let mut inside = false;
                let n = vertices.len();
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    if (a[1] > p[1]) != (b[1] > p[1]) {
                        let t = (p[1] - a[1]) / (b[1] - a[1]);
                        if p[0] < a[0] + t * (b[0] - a[0]) {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            BodyShape::Rectangle { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
            BodyShape::Disk { radius, .. } => PI * radius * radius,
            BodyShape::Ring { inner, outer, .. } => PI * (outer * outer - inner * inner),
            BodyShape::Polygon { vertices } => {
                let n = vertices.len();
                let s: f64 = (0..n)
                    .map(|i| {
                        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                        a[0] * b[1] - b[0] * a[1]
                    })
                    .sum();
                0.5 * s.abs()
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            BodyShape::Rectangle { min, max } => (*min, *max),
            BodyShape::Disk { center, radius: r } | BodyShape::Ring { center, outer: r, .. } => {
                ([center[0] - r, center[1] - r], [center[0] + r, center[1] + r])
            }
            BodyShape::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for a in 0..2 {
                        lo[a] = lo[a].min(v[a]);
                        hi[a] = hi[a].max(v[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let ok = match self {
            BodyShape::Rectangle { min, max } => max[0] > min[0] && max[1] > min[1],
            BodyShape::Disk { radius, .. } => *radius > 0.0,
            BodyShape::Ring { inner, outer, .. } => *inner >= 0.0 && outer > inner,
            BodyShape::Polygon { vertices } => vertices.len() >= 3 && self.area() > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("degenerate {self:?}"))
        }
    }
}

/// `v(x) = base + gradient · (x − origin)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialVelocity {
    pub base: Vec2,
    pub gradient: Mat2,
    pub origin: Vec2,
}

impl Default for InitialVelocity {
    fn default() -> Self {
        Self::constant(Vec2::zeros())
    }
}

impl InitialVelocity {
    pub fn constant(v: Vec2) -> Self {
        Self {
            base: v,
            gradient: Mat2::zeros(),
            origin: Vec2::zeros(),
        }
    }

    pub fn at(&self, x: &Vec2) -> Vec2 {
        self.base + self.gradient * (x - self.origin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub shape: BodyShape,
    pub material: usize,
    pub field: usize,
    pub velocity: InitialVelocity,
}

/// Fills `body.shape` with points at the sub-cell centres of the grid lattice.
///
/// Points are ordered row by row (y outer, x inner). Velocities are left at
/// zero; see [`apply_initial_velocity`].
pub fn discretize(
    body: &Body,
    materials: &[Material],
    grid: &SplineGrid,
    cell_density: usize,
    thickness: f64,
) -> Result<Vec<MaterialPoint>> {
    if cell_density == 0 {
        return Err(Error::config("cell_density", "must be at least 1"));
    }
    let mat = materials
        .get(body.material)
        .ok_or_else(|| Error::config("material", format!("no material {}", body.material)))?;
    let s = grid.h / cell_density as f64;
    let volume = s * s * thickness;
    let (lo, hi) = body.shape.bounds();
    let spans = grid.spans();
    let mut range = [(0usize, 0usize); 2];
    for a in 0..2 {
        let n = spans[a] * cell_density;
        let first = ((lo[a] - grid.origin[a]) / s - 0.5).floor().max(0.0) as usize;
        let last = (((hi[a] - grid.origin[a]) / s - 0.5).ceil().max(0.0) as usize).min(n - 1);
        range[a] = (first, last);
    }
    let mut points = Vec::new();
    for j in range[1].0..=range[1].1 {
        let y = grid.origin[1] + (j as f64 + 0.5) * s;
        for i in range[0].0..=range[0].1 {
            let x = Vec2::new(grid.origin[0] + (i as f64 + 0.5) * s, y);
            if !body.shape.contains(&x) {
                continue;
            }
            points.push(MaterialPoint {
                field: body.field,
                material: body.material,
                x,
                u: Vec2::zeros(),
                v: Vec2::zeros(),
                a: Vec2::zeros(),
                volume,
                mass: mat.rho * volume,
                rho: mat.rho,
                strain: Mat2::zeros(),
                stress: Mat2::zeros(),
                history: 0.0,
                c: 1.0,
                phi: mat.phi,
                spacing: s,
            });
        }
    }
    if points.is_empty() {
        return Err(Error::config(
            "bodies",
            format!("shape {:?} produced no material points", body.shape),
        ));
    }
    Ok(points)
}

pub fn apply_initial_velocity(points: &mut [MaterialPoint], velocity: &InitialVelocity) {
    for p in points {
        p.v = velocity.at(&p.x);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreCrack {
    pub a: Vec2,
    pub b: Vec2,
    /// Seeding multiplier B.
    pub magnitude: f64,
    /// Restrict seeding to one discrete field.
    pub field: Option<usize>,
}

pub fn distance_to_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Raises H near the segment to `B·Ḡc/(4 l0)·(1 − d/l0)` for `d < l0`.
pub fn seed_precrack(points: &mut [MaterialPoint], crack: &PreCrack, materials: &[Material]) {
    for p in points.iter_mut() {
        if crack.field.is_some_and(|f| f != p.field) {
            continue;
        }
        let m = &materials[p.material];
        let d = distance_to_segment(&p.x, &crack.a, &crack.b);
        if d < m.l0 {
            let seeded = crack.magnitude * m.gc / (4.0 * m.l0) * (1.0 - d / m.l0);
            p.history = p.history.max(seeded);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TractionLoad {
    pub band_min: Vec2,
    pub band_max: Vec2,
    /// N/mm².
    pub traction: Vec2,
    /// Linear ramp duration in µs; zero means applied at full value from t = 0.
    pub ramp: f64,
    /// Keep only the outermost particle layer of the band on this side.
    pub edge: Option<Edge>,
}

impl TractionLoad {
    pub fn scale(&self, t: f64) -> f64 {
        if self.ramp > 0.0 {
            (t / self.ramp).min(1.0)
        } else {
            1.0
        }
    }
}

/// A particle carrying an equivalent point force from a traction load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TractionCarrier {
    pub point: usize,
    pub load: usize,
    /// Force at full load, N.
    pub force: Vec2,
}

/// Selects the carrier particles of a traction load and their point forces
/// `t̄ · spacing · thickness`.
pub fn traction_carriers(
    points: &[MaterialPoint],
    load: &TractionLoad,
    load_index: usize,
    thickness: f64,
) -> Result<Vec<TractionCarrier>> {
    let inside = |x: &Vec2| (0..2).all(|a| x[a] >= load.band_min[a] && x[a] <= load.band_max[a]);
    let mut ids: Vec<usize> = (0..points.len()).filter(|&i| inside(&points[i].x)).collect();
    if let Some(edge) = load.edge {
        let (axis, outer_max) = match edge {
            Edge::Left => (0, false),
            Edge::Right => (0, true),
            Edge::Bottom => (1, false),
            Edge::Top => (1, true),
        };
        let coord = |i: &usize| points[*i].x[axis];
        let extreme = if outer_max {
            ids.iter().map(coord).fold(f64::NEG_INFINITY, f64::max)
        } else {
            ids.iter().map(coord).fold(f64::INFINITY, f64::min)
        };
        ids.retain(|i| (coord(i) - extreme).abs() < 0.5 * points[*i].spacing);
    }
    if ids.is_empty() {
        return Err(Error::config(
            format!("loads.tractions[{load_index}]"),
            "band selects no material points",
        ));
    }
    Ok(ids
        .into_iter()
        .map(|i| TractionCarrier {
            point: i,
            load: load_index,
            force: load.traction * (points[i].spacing * thickness),
        })
        .collect())
}
