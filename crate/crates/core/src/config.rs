//! TOML simulation and polar-sweep configuration.
//!
//! Units: mm, µs, N, N/mm², density in kg/m³, gravity in m/s², velocities in
//! mm/µs, angles in degrees. Validation collects every problem before
//! reporting; unknown keys are errors.

use std::collections::HashMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bspline::build_grid;
use crate::constitutive::PlaneMode;
use crate::contact::{ContactDebug, ContactParams};
use crate::domain::{
    apply_initial_velocity, discretize, seed_precrack, Body, BodyShape, Edge, InitialVelocity, Material, PreCrack,
    TractionLoad,
};
use crate::error::{ConfigErrors, ConfigIssue};
use crate::math::{Mat2, Vec2};
use crate::phase_field::{GammaComponents, GammaTensor};
use crate::solver::{FixedBoundary, Model, SolverControls, TimeStep};
use crate::surface_energy::{uniform_angles, PolarQuery};
use crate::units;
use crate::{Error, Result};

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitsConfig {
    #[serde(default = "UnitsConfig::mm")]
    pub length: String,
    #[serde(default = "UnitsConfig::us")]
    pub time: String,
    #[serde(default = "UnitsConfig::newton")]
    pub force: String,
    #[serde(default = "UnitsConfig::kg_m3")]
    pub density: String,
}

impl UnitsConfig {
    fn mm() -> String {
        "mm".into()
    }
    fn us() -> String {
        "us".into()
    }
    fn newton() -> String {
        "N".into()
    }
    fn kg_m3() -> String {
        "kg/m3".into()
    }
}

impl Default for UnitsConfig {
    fn default() -> Self {
        Self {
            length: Self::mm(),
            time: Self::us(),
            force: Self::newton(),
            density: Self::kg_m3(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default)]
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub h: f64,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialConfig {
    pub name: String,
    #[serde(rename = "E")]
    pub e: f64,
    pub nu: f64,
    /// kg/m³.
    pub rho: f64,
    pub l0: f64,
    #[serde(default)]
    pub k_f: f64,
    #[serde(rename = "Gc")]
    pub gc: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub gamma: GammaComponents,
    /// Material orientation, degrees.
    #[serde(default)]
    pub phi_deg: f64,
    #[serde(default = "default_plane")]
    pub plane: PlaneMode,
}

fn default_plane() -> PlaneMode {
    PlaneMode::PlaneStrain
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyConfig {
    pub name: String,
    pub material: String,
    #[serde(default)]
    pub field: usize,
    pub shape: BodyShape,
    /// mm/µs.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// 1/µs, row-major `∂v_i/∂x_j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_gradient: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_origin: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreCrackConfig {
    pub a: [f64; 2],
    pub b: [f64; 2],
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<usize>,
}

fn default_magnitude() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractionConfig {
    pub band_min: [f64; 2],
    pub band_max: [f64; 2],
    /// N/mm².
    pub traction: [f64; 2],
    #[serde(default)]
    pub ramp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<Edge>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadsConfig {
    /// m/s².
    #[serde(default)]
    pub gravity: [f64; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tractions: Vec<TractionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedConfig {
    pub band_min: [f64; 2],
    pub band_max: [f64; 2],
    #[serde(default = "yes")]
    pub x: bool,
    #[serde(default = "yes")]
    pub y: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    #[serde(default)]
    pub mu_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSetting {
    Value(f64),
    Keyword(String),
}

impl Default for DtSetting {
    fn default() -> Self {
        DtSetting::Keyword("auto".into())
    }
}

impl DtSetting {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(DtSetting::Keyword("auto".into()));
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(DtSetting::Value(v)),
            _ => Err(format!("expected a positive number or \"auto\", got {s:?}")),
        }
    }

    fn resolve(&self) -> std::result::Result<TimeStep, String> {
        match self {
            DtSetting::Keyword(k) if k == "auto" => Ok(TimeStep::Auto),
            DtSetting::Keyword(k) => Err(format!("expected a number or \"auto\", got {k:?}")),
            DtSetting::Value(v) if *v > 0.0 && v.is_finite() => Ok(TimeStep::Fixed(*v)),
            DtSetting::Value(v) => Err(format!("time step must be positive, got {v}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default)]
    pub dt: DtSetting,
    #[serde(default = "default_alpha")]
    pub alpha_c: f64,
    #[serde(default)]
    pub n_steps: usize,
    #[serde(default = "default_staggs")]
    pub n_staggs: usize,
    #[serde(default = "default_tol")]
    pub tol_c: f64,
    #[serde(default)]
    pub check_every: usize,
    #[serde(default = "yes")]
    pub phase_field: bool,
}

fn default_alpha() -> f64 {
    0.8
}
fn default_staggs() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-6
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: DtSetting::default(),
            alpha_c: default_alpha(),
            n_steps: 0,
            n_staggs: default_staggs(),
            tol_c: default_tol(),
            check_every: 0,
            phase_field: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    /// Snapshot every `snapshot_stride` steps (and at the final step); 0 writes
    /// only the initial and final snapshots.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "one")]
    pub energy_stride: usize,
    /// Omit points with c below this value from VTK files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_min_output: Option<f64>,
    #[serde(default = "yes")]
    pub vtk: bool,
}

fn default_directory() -> String {
    "out".into()
}
fn default_stride() -> usize {
    100
}
fn one() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            snapshot_stride: default_stride(),
            energy_stride: 1,
            c_min_output: None,
            vtk: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipConfig {
    pub axis: Axis,
    pub seed_min: [f64; 2],
    pub seed_max: [f64; 2],
    #[serde(default = "half")]
    pub c_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<usize>,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip: Option<TipConfig>,
    /// Count fragments at every snapshot.
    #[serde(default)]
    pub fragments: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DebugConfig {
    #[serde(default)]
    pub invert_normals: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "one_f")]
    pub thickness: f64,
    #[serde(default = "default_density")]
    pub cell_density: usize,
    #[serde(default)]
    pub units: UnitsConfig,
    pub grid: GridConfig,
    pub materials: Vec<MaterialConfig>,
    pub bodies: Vec<BodyConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub precracks: Vec<PreCrackConfig>,
    #[serde(default)]
    pub loads: LoadsConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<FixedConfig>,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub debug: DebugConfig,
}

fn one_f() -> f64 {
    1.0
}
fn default_density() -> usize {
    3
}

/// Deserializes `text`, reporting every unknown key by path.
fn parse_strict<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let value: std::result::Result<T, _> = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()));
    let mut issues: Vec<ConfigIssue> = unknown
        .into_iter()
        .map(|path| ConfigIssue {
            path,
            message: "unknown key".into(),
        })
        .collect();
    match value {
        Ok(v) if issues.is_empty() => Ok(v),
        Ok(_) => Err(Error::Config(ConfigErrors(issues))),
        Err(e) => {
            issues.push(ConfigIssue {
                path: String::new(),
                message: e.to_string().trim_end().to_string(),
            });
            Err(Error::Config(ConfigErrors(issues)))
        }
    }
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Default)]
struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.push(path, message);
        }
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(ConfigErrors(self.0)))
        }
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl SimConfig {
    /// Parses and validates a configuration.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SimConfig = parse_strict(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Reports every problem found; does not stop at the first.
    pub fn validate(&self) -> Result<()> {
        let mut is = Issues::default();
        let u = &self.units;
        for (key, got, want) in [
            ("units.length", &u.length, "mm"),
            ("units.time", &u.time, "us"),
            ("units.force", &u.force, "N"),
            ("units.density", &u.density, "kg/m3"),
        ] {
            is.check(got == want, key, format!("unsupported unit {got:?}; expected {want:?}"));
        }
        is.check(self.thickness > 0.0, "thickness", "must be positive");
        is.check(self.cell_density >= 1, "cell_density", "must be at least 1");

        let g = &self.grid;
        is.check(g.h > 0.0 && g.h.is_finite(), "grid.h", "must be positive");
        is.check(
            finite(&g.origin) && finite(&g.extent),
            "grid",
            "origin and extent must be finite",
        );
        is.check((1..=3).contains(&g.order), "grid.order", "must be 1, 2 or 3");
        if g.h > 0.0 && (1..=3).contains(&g.order) {
            if let Err(e) = build_grid(g.origin, g.extent, g.h, g.order) {
                is.push("grid", e.to_string());
            }
        }

        let mut names: HashMap<&str, usize> = HashMap::new();
        for (i, m) in self.materials.iter().enumerate() {
            let path = format!("materials[{i}]");
            if names.insert(m.name.as_str(), i).is_some() {
                is.push(format!("{path}.name"), format!("duplicate material name {:?}", m.name));
            }
            if let Err(e) = self.material(i) {
                is.push(path, e.to_string());
            }
        }
        is.check(!self.bodies.is_empty(), "bodies", "at least one body is required");
        let mut body_names = HashMap::new();
        for (i, b) in self.bodies.iter().enumerate() {
            let path = format!("bodies[{i}]");
            if body_names.insert(b.name.as_str(), i).is_some() {
                is.push(format!("{path}.name"), format!("duplicate body name {:?}", b.name));
            }
            if !names.contains_key(b.material.as_str()) {
                is.push(
                    format!("{path}.material"),
                    format!("body {:?} references unknown material {:?}", b.name, b.material),
                );
            }
            if let Err(e) = b.shape.validate() {
                is.push(format!("{path}.shape"), format!("body {:?}: {e}", b.name));
            }
            is.check(finite(&b.velocity), format!("{path}.velocity"), "must be finite");
        }
        let n_fields = self.bodies.iter().map(|b| b.field + 1).max().unwrap_or(0);
        for f in 0..n_fields {
            is.check(
                self.bodies.iter().any(|b| b.field == f),
                "bodies",
                format!("field ids must be contiguous from 0; field {f} has no body"),
            );
        }
        for (i, c) in self.precracks.iter().enumerate() {
            let path = format!("precracks[{i}]");
            is.check(c.a != c.b, &path, "segment end points coincide");
            is.check(c.magnitude > 0.0, format!("{path}.magnitude"), "must be positive");
            if let Some(f) = c.field {
                is.check(f < n_fields, format!("{path}.field"), format!("no body uses field {f}"));
            }
        }
        is.check(finite(&self.loads.gravity), "loads.gravity", "must be finite");
        for (i, t) in self.loads.tractions.iter().enumerate() {
            let path = format!("loads.tractions[{i}]");
            is.check(
                t.band_max[0] >= t.band_min[0] && t.band_max[1] >= t.band_min[1],
                format!("{path}.band_max"),
                "band_max must not be below band_min",
            );
            is.check(t.ramp >= 0.0, format!("{path}.ramp"), "must be non-negative");
        }
        for (i, f) in self.fixed.iter().enumerate() {
            let path = format!("fixed[{i}]");
            is.check(f.x || f.y, &path, "fixes no component");
            is.check(
                f.band_max[0] >= f.band_min[0] && f.band_max[1] >= f.band_min[1],
                format!("{path}.band_max"),
                "band_max must not be below band_min",
            );
        }
        is.check(self.contact.mu_f >= 0.0, "contact.mu_f", "must be non-negative");
        let s = &self.solver;
        if let Err(e) = s.dt.resolve() {
            is.push("solver.dt", e);
        }
        is.check(
            (0.8..=0.98).contains(&s.alpha_c),
            "solver.alpha_c",
            "must lie in [0.8, 0.98]",
        );
        is.check(s.n_staggs >= 1, "solver.n_staggs", "must be at least 1");
        is.check(s.tol_c > 0.0, "solver.tol_c", "must be positive");
        is.check(
            self.output.energy_stride >= 1,
            "output.energy_stride",
            "must be at least 1",
        );
        if let Some(c) = self.output.c_min_output {
            is.check((0.0..=1.0).contains(&c), "output.c_min_output", "must lie in [0, 1]");
        }
        if let Some(t) = &self.diagnostics.tip {
            is.check(
                t.c_threshold > 0.0 && t.c_threshold < 1.0,
                "diagnostics.tip.c_threshold",
                "must lie in (0, 1)",
            );
        }
        is.finish()
    }

    fn material(&self, i: usize) -> Result<Material> {
        let m = &self.materials[i];
        let gamma = GammaTensor::from_components(&m.gamma)?;
        Material::new(
            m.name.clone(),
            m.e,
            m.nu,
            units::density_from_kg_m3(m.rho),
            m.l0,
            m.k_f,
            m.gc,
            gamma,
            m.phi_deg.to_radians(),
            m.plane,
        )
    }

    pub fn materials(&self) -> Result<Vec<Material>> {
        (0..self.materials.len()).map(|i| self.material(i)).collect()
    }

    pub fn controls(&self) -> SolverControls {
        let s = &self.solver;
        SolverControls {
            dt: s.dt.resolve().unwrap_or(TimeStep::Auto),
            alpha_c: s.alpha_c,
            n_steps: s.n_steps,
            n_staggs: s.n_staggs,
            tol_c: s.tol_c,
            check_every: s.check_every,
            phase_field: s.phase_field,
        }
    }

    /// Discretizes the bodies and assembles the solver input.
    pub fn build(&self) -> Result<Model> {
        let g = &self.grid;
        let grid = build_grid(g.origin, g.extent, g.h, g.order)?;
        let materials = self.materials()?;
        let index: HashMap<&str, usize> = self
            .materials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.name.as_str(), i))
            .collect();
        let mut points = Vec::new();
        for (i, b) in self.bodies.iter().enumerate() {
            let material = *index
                .get(b.material.as_str())
                .ok_or_else(|| Error::config(format!("bodies[{i}].material"), "unknown material"))?;
            let velocity = InitialVelocity {
                base: Vec2::from(b.velocity),
                gradient: b
                    .velocity_gradient
                    .map(|m| Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1]))
                    .unwrap_or_else(Mat2::zeros),
                origin: Vec2::from(b.velocity_origin.unwrap_or_default()),
            };
            let body = Body {
                shape: b.shape.clone(),
                material,
                field: b.field,
                velocity,
            };
            let mut pts = discretize(&body, &materials, &grid, self.cell_density, self.thickness)
                .map_err(|e| Error::config(format!("bodies[{i}]"), format!("body {:?}: {e}", b.name)))?;
            apply_initial_velocity(&mut pts, &velocity);
            points.extend(pts);
        }
        for c in &self.precracks {
            let crack = PreCrack {
                a: Vec2::from(c.a),
                b: Vec2::from(c.b),
                magnitude: c.magnitude,
                field: c.field,
            };
            seed_precrack(&mut points, &crack, &materials);
        }
        let g = self.loads.gravity;
        Ok(Model {
            grid,
            materials,
            points,
            gravity: Vec2::new(units::accel_from_m_s2(g[0]), units::accel_from_m_s2(g[1])),
            tractions: self
                .loads
                .tractions
                .iter()
                .map(|t| TractionLoad {
                    band_min: Vec2::from(t.band_min),
                    band_max: Vec2::from(t.band_max),
                    traction: Vec2::from(t.traction),
                    ramp: t.ramp,
                    edge: t.edge,
                })
                .collect(),
            fixed: self
                .fixed
                .iter()
                .map(|f| FixedBoundary {
                    band_min: Vec2::from(f.band_min),
                    band_max: Vec2::from(f.band_max),
                    x: f.x,
                    y: f.y,
                })
                .collect(),
            contact: ContactParams {
                mu_f: self.contact.mu_f,
            },
            controls: self.controls(),
            thickness: self.thickness,
            debug: ContactDebug {
                invert_normals: self.debug.invert_normals,
            },
        })
    }
}

/// Input of the `polar` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarConfig {
    /// Ḡc, N/mm.
    #[serde(rename = "Gc")]
    pub gc: f64,
    pub l0: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub gamma: GammaComponents,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_lb: Option<f64>,
    #[serde(default = "default_n1d")]
    pub n_1d: usize,
}

fn default_samples() -> usize {
    360
}
fn default_n1d() -> usize {
    2001
}

impl PolarConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PolarConfig = parse_strict(text)?;
        let mut is = Issues::default();
        is.check(cfg.gc > 0.0, "Gc", "must be positive");
        is.check(cfg.l0 > 0.0, "l0", "must be positive");
        is.check(cfg.samples >= 1, "samples", "must be at least 1");
        is.check(cfg.n_1d % 2 == 1 && cfg.n_1d >= 5, "n_1d", "must be odd and at least 5");
        if let Some(x) = cfg.x_lb {
            is.check(x >= 20.0 * cfg.l0, "x_lb", "must be at least 20 l0");
        }
        if let Err(e) = GammaTensor::from_components(&cfg.gamma) {
            is.push("gamma", e.to_string());
        }
        is.finish()?;
        Ok(cfg)
    }

    pub fn query(&self) -> Result<PolarQuery> {
        Ok(PolarQuery {
            gamma: GammaTensor::from_components(&self.gamma)?,
            gc_bar: self.gc,
            l0: self.l0,
            theta: uniform_angles(self.samples),
            x_lb: self.x_lb,
            n_1d: self.n_1d,
        })
    }
}
