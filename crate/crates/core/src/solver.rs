//! Explicit staggered time stepping: grid transfers, phase-field solves,
//! contact, particle updates and energy bookkeeping.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bspline::{rotate_derivatives, BasisEval, SplineGrid};
use crate::constitutive::{split_energy, stress, update_history};
use crate::contact::{self, ContactDebug, ContactNode, ContactParams, Violation};
use crate::domain::{traction_carriers, Material, MaterialPoint, TractionCarrier, TractionLoad};
use crate::dynamics::{self, Constraints, FieldNodalState};
use crate::math::Vec2;
use crate::phase_field::{self, crack_density, interpolate_c, PointPhase};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverControls {
    pub dt: TimeStep,
    pub alpha_c: f64,
    pub n_steps: usize,
    pub n_staggs: usize,
    pub tol_c: f64,
    /// Verify contact constraints every `check_every` steps; 0 disables.
    pub check_every: usize,
    /// When false the phase field is pinned at 1 (pure elastodynamics).
    pub phase_field: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            dt: TimeStep::Auto,
            alpha_c: 0.8,
            n_steps: 0,
            n_staggs: 1,
            tol_c: 1e-6,
            check_every: 0,
            phase_field: true,
        }
    }
}

/// `alpha_c · h / max c_dil` over the materials, µs.
pub fn critical_dt(materials: &[Material], h: f64, alpha_c: f64) -> f64 {
    let c = materials.iter().map(|m| m.lame.c_dil).fold(0.0, f64::max);
    alpha_c * h / c
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyRecord {
    pub t: f64,
    pub elastic: f64,
    pub fracture: f64,
    pub kinetic: f64,
}

impl EnergyRecord {
    pub fn total(&self) -> f64 {
        self.elastic + self.fracture + self.kinetic
    }
}

/// Nodes whose Greville point lies in the band have the selected velocity
/// components fixed to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedBoundary {
    pub band_min: Vec2,
    pub band_max: Vec2,
    pub x: bool,
    pub y: bool,
}

pub fn essential_constraints(grid: &SplineGrid, fixed: &[FixedBoundary]) -> Constraints {
    let mut bc = Constraints::none(if fixed.is_empty() { 0 } else { grid.node_count() });
    for f in fixed {
        for i in 0..grid.node_count() {
            let p = grid.node_position(i);
            if (0..2).all(|a| p[a] >= f.band_min[a] && p[a] <= f.band_max[a]) {
                if f.x {
                    bc.fix(i, 0);
                }
                if f.y {
                    bc.fix(i, 1);
                }
            }
        }
    }
    bc
}

/// Everything needed to start a simulation.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: SplineGrid,
    pub materials: Vec<Material>,
    pub points: Vec<MaterialPoint>,
    /// Constant body-force acceleration.
    pub gravity: Vec2,
    pub tractions: Vec<TractionLoad>,
    pub fixed: Vec<FixedBoundary>,
    pub contact: ContactParams,
    pub controls: SolverControls,
    pub thickness: f64,
    pub debug: ContactDebug,
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub staggers: usize,
    /// ‖R^c‖ after each stagger.
    pub residuals: Vec<f64>,
    pub cg_iterations: usize,
    pub contacts: Vec<ContactNode>,
    pub degenerate_normals: usize,
    pub violations: Vec<Violation>,
}

pub struct Simulation {
    pub grid: SplineGrid,
    pub materials: Vec<Material>,
    pub points: Vec<MaterialPoint>,
    pub n_fields: usize,
    pub controls: SolverControls,
    pub contact: ContactParams,
    pub debug: ContactDebug,
    pub gravity: Vec2,
    pub dt: f64,
    pub step: usize,
    pub t: f64,
    pub mass_eps: f64,
    pub states: Vec<FieldNodalState>,
    /// Dense nodal phase field per field.
    pub c_nodal: Vec<Vec<f64>>,
    /// Phase field at the points in the material frame.
    pub phases: Vec<PointPhase>,
    pub work_ext: f64,
    pub initial: EnergyRecord,
    pub energy: EnergyRecord,
    pub last: StepReport,
    tractions: Vec<TractionLoad>,
    carriers: Vec<TractionCarrier>,
    bc: Constraints,
    field_points: Vec<Vec<usize>>,
}

/// Energy above `BLOW_UP_FACTOR ×` the bound aborts the run.
pub const BLOW_UP_FACTOR: f64 = 2.0;
/// Explicit-integration slack of the energy bound.
pub const ENERGY_SLACK: f64 = 0.05;

impl Simulation {
    pub fn new(model: Model) -> Result<Self> {
        let Model {
            grid,
            materials,
            mut points,
            gravity,
            tractions,
            fixed,
            contact,
            controls,
            thickness,
            debug,
        } = model;
        if points.is_empty() {
            return Err(Error::config("bodies", "no material points"));
        }
        if controls.n_staggs == 0 {
            return Err(Error::config("solver.n_staggs", "must be at least 1"));
        }
        let dt = match controls.dt {
            TimeStep::Auto => critical_dt(&materials, grid.h, controls.alpha_c),
            TimeStep::Fixed(dt) if dt > 0.0 && dt.is_finite() => dt,
            TimeStep::Fixed(dt) => return Err(Error::config("solver.dt", format!("invalid time step {dt}"))),
        };
        let n_fields = points.iter().map(|p| p.field).max().unwrap() + 1;
        let mut field_points = vec![Vec::new(); n_fields];
        for (i, p) in points.iter().enumerate() {
            field_points[p.field].push(i);
        }
        if let Some(f) = field_points.iter().position(|f| f.is_empty()) {
            return Err(Error::config("bodies", format!("field {f} has no material points")));
        }
        let mut carriers = Vec::new();
        for (k, load) in tractions.iter().enumerate() {
            carriers.extend(traction_carriers(&points, load, k, thickness)?);
        }
        let avg_mass = points.iter().map(|p| p.mass).sum::<f64>() / points.len() as f64;
        let nodes = grid.node_count();
        let bc = essential_constraints(&grid, &fixed);
        let c_nodal = vec![vec![1.0; nodes]; n_fields];
        for p in points.iter_mut() {
            p.stress = stress(&p.strain, p.c, materials[p.material].k_f, &materials[p.material].lame);
        }
        let mut sim = Self {
            phases: vec![PointPhase::intact(); points.len()],
            grid,
            materials,
            points,
            n_fields,
            controls,
            contact,
            debug,
            gravity,
            dt,
            step: 0,
            t: 0.0,
            mass_eps: 1e-12 * avg_mass,
            states: vec![FieldNodalState::new(nodes); n_fields],
            c_nodal,
            work_ext: 0.0,
            initial: EnergyRecord::default(),
            energy: EnergyRecord::default(),
            last: StepReport::default(),
            tractions,
            carriers,
            bc,
            field_points,
        };
        // Initial phase field from the seeded history.
        if sim.controls.phase_field {
            let (_, rotated) = sim.basis()?;
            let history: Vec<f64> = sim.points.iter().map(|p| p.history).collect();
            sim.solve_phase_field(&rotated, &history)?;
            for (p, ph) in sim.points.iter_mut().zip(&sim.phases) {
                p.c = ph.c;
                let m = &sim.materials[p.material];
                p.stress = stress(&p.strain, p.c, m.k_f, &m.lame);
            }
        }
        sim.initial = sim.energies();
        sim.energy = sim.initial;
        Ok(sim)
    }

    pub fn field_points(&self, field: usize) -> &[usize] {
        &self.field_points[field]
    }

    pub fn constraints(&self) -> &Constraints {
        &self.bc
    }

    fn basis(&self) -> Result<(Vec<BasisEval>, Vec<BasisEval>)> {
        let step = self.step;
        let basis: Vec<BasisEval> = self
            .points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                self.grid.eval(&p.x).map_err(|_| Error::ParticleEscaped {
                    particle: i,
                    step,
                    x: p.x[0],
                    y: p.x[1],
                })
            })
            .collect::<Result<_>>()?;
        let rotated = basis
            .par_iter()
            .zip(&self.points)
            .map(|(b, p)| {
                if p.phi == 0.0 {
                    b.clone()
                } else {
                    rotate_derivatives(b, p.phi)
                }
            })
            .collect();
        Ok((basis, rotated))
    }

    /// Solves every field's phase-field system and refreshes `phases`.
    fn solve_phase_field(&mut self, rotated: &[BasisEval], history: &[f64]) -> Result<usize> {
        let mut iterations = 0;
        for f in 0..self.n_fields {
            let ids = &self.field_points[f];
            let sys = phase_field::assemble(&self.grid, &self.points, ids, rotated, &self.materials, history);
            let dense = &mut self.c_nodal[f];
            let mut c: Vec<f64> = sys.nodes().iter().map(|&i| dense[i]).collect();
            iterations += phase_field::solve(&sys, &mut c)?.iterations;
            for (&i, &v) in sys.nodes().iter().zip(&c) {
                dense[i] = v;
            }
        }
        let phases: Vec<PointPhase> = self
            .points
            .par_iter()
            .zip(rotated)
            .map(|(p, b)| interpolate_c(b, &self.c_nodal[p.field], self.materials[p.material].k_f))
            .collect();
        self.phases = phases;
        Ok(iterations)
    }

    fn phase_residual(&self, rotated: &[BasisEval], history: &[f64]) -> f64 {
        (0..self.n_fields)
            .map(|f| {
                phase_field::residual(
                    &self.grid,
                    &self.points,
                    &self.field_points[f],
                    rotated,
                    &self.c_nodal[f],
                    &self.materials,
                    history,
                )
                .1
                .powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    fn point_forces(&self, t: f64) -> Vec<Vec2> {
        let mut f = vec![Vec2::zeros(); self.points.len()];
        for c in &self.carriers {
            f[c.point] += c.force * self.tractions[c.load].scale(t);
        }
        f
    }

    /// `Σ f_ext · v` over the grid with the corrected nodal velocities, the
    /// rate at which external loads enter the discrete system.
    fn external_power(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.active.iter().map(|&i| s.f_ext[i].dot(&s.v[i])).sum::<f64>())
            .sum()
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<&StepReport> {
        let dt = self.dt;
        let (basis, rotated) = self.basis()?;
        for s in self.states.iter_mut() {
            s.reset();
        }
        dynamics::p2g(&mut self.states, &self.points, &basis);
        let forces = self.point_forces(self.t);
        dynamics::external_forces(&mut self.states, &self.points, &basis, &self.gravity, &forces);
        for s in self.states.iter_mut() {
            self.bc.apply(s);
        }
        let candidates = if self.n_fields > 1 {
            contact::detect(&self.states, self.mass_eps)
        } else {
            Vec::new()
        };
        let verify = self.controls.check_every > 0 && self.step.is_multiple_of(self.controls.check_every);

        let committed: Vec<f64> = self.points.iter().map(|p| p.history).collect();
        let mut history = committed.clone();
        let mut report = StepReport::default();
        for _ in 0..self.controls.n_staggs {
            report.staggers += 1;
            if self.controls.phase_field {
                report.cg_iterations += self.solve_phase_field(&rotated, &history)?;
            }
            for s in self.states.iter_mut() {
                dynamics::trial_update(s, dt, self.mass_eps, &self.bc);
            }
            let (nodes, degenerate) = contact::resolve(&mut self.states, &candidates, dt, &self.contact, self.debug);
            for s in self.states.iter_mut() {
                self.bc.apply_corrected(s);
            }
            if verify {
                report
                    .violations
                    .extend(contact::verify_constraints(&nodes, &self.contact));
            }
            report.contacts = nodes;
            report.degenerate_normals = degenerate;
            if !self.controls.phase_field {
                break;
            }
            let states = &self.states;
            history = self
                .points
                .par_iter()
                .zip(&basis)
                .zip(&committed)
                .map(|((p, b), &h)| {
                    let eps = p.strain + dynamics::strain_increment(b, &states[p.field].v, dt);
                    update_history(h, split_energy(&eps, &self.materials[p.material].lame).psi_plus)
                })
                .collect();
            let r = self.phase_residual(&rotated, &history);
            report.residuals.push(r);
            if r <= self.controls.tol_c {
                break;
            }
        }

        for s in self.states.iter_mut() {
            dynamics::nodal_accelerations(s);
        }
        let c: Vec<f64> = self.phases.iter().map(|p| p.c).collect();
        dynamics::g2p(
            &mut self.points,
            &basis,
            &self.states,
            &c,
            &self.materials,
            &self.grid,
            dt,
            self.step,
        )?;
        if self.controls.phase_field {
            for (p, h) in self.points.iter_mut().zip(&history) {
                p.history = *h;
            }
        }
        self.work_ext += dt * self.external_power();
        self.step += 1;
        self.t = self.step as f64 * dt;
        self.energy = self.energies();
        self.last = report;
        self.check_energy()?;
        Ok(&self.last)
    }

    /// Upper bound on `elastic + kinetic + (fracture − initial fracture)`.
    pub fn energy_bound(&self) -> f64 {
        (1.0 + ENERGY_SLACK) * (self.initial.elastic + self.initial.kinetic + self.work_ext)
    }

    fn check_energy(&self) -> Result<()> {
        let e = &self.energy;
        let total = e.elastic + e.kinetic + (e.fracture - self.initial.fracture);
        let bound = self.energy_bound();
        if !total.is_finite() || (total > BLOW_UP_FACTOR * bound && total > 0.0) {
            return Err(Error::EnergyBlowUp {
                step: self.step,
                energy: total,
                bound,
            });
        }
        Ok(())
    }

    pub fn energies(&self) -> EnergyRecord {
        let (elastic, fracture, kinetic) = self
            .points
            .par_iter()
            .zip(&self.phases)
            .map(|(p, ph)| {
                let m = &self.materials[p.material];
                let s = split_energy(&p.strain, &m.lame);
                let el = (ph.g * s.psi_plus + s.psi_minus) * p.volume;
                let fr = if self.controls.phase_field {
                    crack_density(ph, m) * p.volume
                } else {
                    0.0
                };
                (el, fr, 0.5 * p.mass * p.v.norm_squared())
            })
            .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        EnergyRecord {
            t: self.t,
            elastic,
            fracture,
            kinetic,
        }
    }

    /// Total particle linear momentum.
    pub fn momentum(&self) -> Vec2 {
        self.points.iter().fold(Vec2::zeros(), |acc, p| acc + p.v * p.mass)
    }
}

/// Receives the simulation state after initialisation and after each step.
pub trait Observer {
    fn observe(&mut self, sim: &Simulation) -> Result<()>;
    fn finish(&mut self, _sim: &Simulation) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {
    fn observe(&mut self, _sim: &Simulation) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub steps: usize,
    pub wall_time: Duration,
    pub max_residual: f64,
    pub violations: usize,
    pub first_violation: Option<Violation>,
    pub degenerate_normals: usize,
    pub max_cg_iterations: usize,
}

/// Runs `n_steps` steps, observing the initial state and every step. On a
/// stage error the observer is finished before the error is returned.
pub fn run(sim: &mut Simulation, n_steps: usize, observer: &mut dyn Observer) -> Result<RunSummary> {
    let start = Instant::now();
    let mut summary = RunSummary::default();
    let result = (|| {
        observer.observe(sim)?;
        for _ in 0..n_steps {
            let r = sim.step()?;
            summary.steps += 1;
            summary.max_residual = r.residuals.iter().copied().fold(summary.max_residual, f64::max);
            summary.violations += r.violations.len();
            if summary.first_violation.is_none() {
                summary.first_violation = r.violations.first().cloned();
            }
            summary.degenerate_normals += r.degenerate_normals;
            summary.max_cg_iterations = summary.max_cg_iterations.max(r.cg_iterations);
            observer.observe(sim)?;
        }
        Ok(())
    })();
    let finished = observer.finish(sim);
    result?;
    finished?;
    summary.wall_time = start.elapsed();
    Ok(summary)
}
