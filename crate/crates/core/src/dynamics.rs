//! Explicit momentum-formulation MPM transfers for one or more discrete fields.

use rayon::prelude::*;

use crate::bspline::{BasisEval, SplineGrid};
use crate::constitutive::stress;
use crate::domain::{Material, MaterialPoint};
use crate::math::{sym, Mat2, Vec2};
use crate::{Error, Result};

/// Nodal arrays of one discrete field, dense over all grid nodes.
///
/// Only entries listed in `active` are meaningful; [`FieldNodalState::reset`]
/// clears exactly those, keeping the storage allocated.
#[derive(Debug, Clone)]
pub struct FieldNodalState {
    pub mass: Vec<f64>,
    pub momentum: Vec<Vec2>,
    pub f_int: Vec<Vec2>,
    pub f_ext: Vec<Vec2>,
    pub f_cont: Vec<Vec2>,
    /// `Σ_p ∇N_I M_p`, used for contact normals.
    pub mass_grad: Vec<Vec2>,
    pub p_trial: Vec<Vec2>,
    pub v_trial: Vec<Vec2>,
    pub v: Vec<Vec2>,
    /// `(f_ext + f_cont − f_int)/M` on nodes with positive mass.
    pub acc: Vec<Vec2>,
    /// Sorted nodes touched by the field's particles.
    pub active: Vec<usize>,
    flag: Vec<bool>,
}

impl FieldNodalState {
    pub fn new(nodes: usize) -> Self {
        let z = vec![Vec2::zeros(); nodes];
        Self {
            mass: vec![0.0; nodes],
            momentum: z.clone(),
            f_int: z.clone(),
            f_ext: z.clone(),
            f_cont: z.clone(),
            mass_grad: z.clone(),
            p_trial: z.clone(),
            v_trial: z.clone(),
            v: z.clone(),
            acc: z,
            active: Vec::new(),
            flag: vec![false; nodes],
        }
    }

    pub fn reset(&mut self) {
        for &i in &self.active {
            self.mass[i] = 0.0;
            self.momentum[i] = Vec2::zeros();
            self.f_int[i] = Vec2::zeros();
            self.f_ext[i] = Vec2::zeros();
            self.f_cont[i] = Vec2::zeros();
            self.mass_grad[i] = Vec2::zeros();
            self.p_trial[i] = Vec2::zeros();
            self.v_trial[i] = Vec2::zeros();
            self.v[i] = Vec2::zeros();
            self.acc[i] = Vec2::zeros();
            self.flag[i] = false;
        }
        self.active.clear();
    }

    pub fn total_mass(&self) -> f64 {
        self.active.iter().map(|&i| self.mass[i]).sum()
    }

    pub fn total_momentum(&self) -> Vec2 {
        self.active.iter().map(|&i| self.momentum[i]).sum()
    }

    fn touch(&mut self, i: usize) {
        if !self.flag[i] {
            self.flag[i] = true;
            self.active.push(i);
        }
    }
}

/// Maps mass, momentum, internal force and mass gradients of every point
/// onto the state of its field. States must be freshly reset.
pub fn p2g(states: &mut [FieldNodalState], points: &[MaterialPoint], basis: &[BasisEval]) {
    for (p, b) in points.iter().zip(basis) {
        let s = &mut states[p.field];
        let mv = p.v * p.mass;
        for k in 0..b.len() {
            let i = b.node_ids[k];
            s.touch(i);
            let n = b.values[k];
            let g = &b.gradients[k];
            s.mass[i] += n * p.mass;
            s.momentum[i] += mv * n;
            s.f_int[i] += p.stress * g * p.volume;
            s.mass_grad[i] += g * p.mass;
        }
    }
    for s in states.iter_mut() {
        s.active.sort_unstable();
    }
}

/// Body force `gravity` (acceleration) and per-point forces `point_forces`.
pub fn external_forces(
    states: &mut [FieldNodalState],
    points: &[MaterialPoint],
    basis: &[BasisEval],
    gravity: &Vec2,
    point_forces: &[Vec2],
) {
    for ((p, b), fp) in points.iter().zip(basis).zip(point_forces) {
        let f = gravity * p.mass + fp;
        if f == Vec2::zeros() {
            continue;
        }
        let s = &mut states[p.field];
        for k in 0..b.len() {
            s.f_ext[b.node_ids[k]] += f * b.values[k];
        }
    }
}

/// Per-node, per-component essential (fixed) boundary conditions.
#[derive(Debug, Clone, Default)]
pub struct Constraints {
    fixed: Vec<[bool; 2]>,
}

impl Constraints {
    pub fn none(nodes: usize) -> Self {
        Self {
            fixed: vec![[false; 2]; nodes],
        }
    }

    pub fn fix(&mut self, node: usize, component: usize) {
        self.fixed[node][component] = true;
    }

    pub fn is_fixed(&self, node: usize, component: usize) -> bool {
        self.fixed.get(node).is_some_and(|f| f[component])
    }

    pub fn count(&self) -> usize {
        self.fixed.iter().map(|f| f[0] as usize + f[1] as usize).sum()
    }

    fn zero(&self, i: usize, v: &mut Vec2) {
        let f = self.fixed[i];
        if f[0] {
            v[0] = 0.0;
        }
        if f[1] {
            v[1] = 0.0;
        }
    }

    /// Zeroes constrained components of momentum and forces.
    pub fn apply(&self, s: &mut FieldNodalState) {
        if self.fixed.is_empty() {
            return;
        }
        for &i in &s.active {
            if self.fixed[i] == [false; 2] {
                continue;
            }
            self.zero(i, &mut s.momentum[i]);
            self.zero(i, &mut s.f_int[i]);
            self.zero(i, &mut s.f_ext[i]);
        }
    }
}

impl Constraints {
    /// Zeroes constrained components of corrected velocities and contact forces.
    pub fn apply_corrected(&self, s: &mut FieldNodalState) {
        if self.fixed.is_empty() {
            return;
        }
        for &i in &s.active {
            if self.fixed[i] == [false; 2] {
                continue;
            }
            self.zero(i, &mut s.v[i]);
            self.zero(i, &mut s.f_cont[i]);
        }
    }
}

/// `p^trl = p + dt (f_ext − f_int)` and the trial velocity on non-inert nodes.
/// Contact forces are reset and the corrected velocity initialised to the trial one.
pub fn trial_update(s: &mut FieldNodalState, dt: f64, mass_eps: f64, bc: &Constraints) {
    for k in 0..s.active.len() {
        let i = s.active[k];
        let mut pt = s.momentum[i] + (s.f_ext[i] - s.f_int[i]) * dt;
        if !bc.fixed.is_empty() {
            bc.zero(i, &mut pt);
        }
        s.p_trial[i] = pt;
        s.v_trial[i] = if s.mass[i] > mass_eps {
            pt / s.mass[i]
        } else {
            Vec2::zeros()
        };
        s.f_cont[i] = Vec2::zeros();
        s.v[i] = s.v_trial[i];
    }
}

/// Nodal accelerations `(f_ext + f_cont − f_int)/M` for every node with mass.
pub fn nodal_accelerations(s: &mut FieldNodalState) {
    for k in 0..s.active.len() {
        let i = s.active[k];
        s.acc[i] = if s.mass[i] > 0.0 {
            (s.f_ext[i] + s.f_cont[i] - s.f_int[i]) / s.mass[i]
        } else {
            Vec2::zeros()
        };
    }
}

/// `dt · sym(Σ v_I ⊗ ∇N_I)`.
pub fn strain_increment(b: &BasisEval, v: &[Vec2], dt: f64) -> Mat2 {
    let mut l = Mat2::zeros();
    for k in 0..b.len() {
        l += v[b.node_ids[k]] * b.gradients[k].transpose();
    }
    sym(&l) * dt
}

/// Grid-to-particle update: strain and stress (with degradation `g`
/// replaced by the phase field `c` per point), FLIP velocity, acceleration,
/// displacement and position. Nodal accelerations must be current.
#[allow(clippy::too_many_arguments)]
pub fn g2p(
    points: &mut [MaterialPoint],
    basis: &[BasisEval],
    states: &[FieldNodalState],
    c: &[f64],
    materials: &[Material],
    grid: &SplineGrid,
    dt: f64,
    step: usize,
) -> Result<()> {
    points.par_iter_mut().enumerate().for_each(|(i, p)| {
        let b = &basis[i];
        let s = &states[p.field];
        let m = &materials[p.material];
        let mut vbar = Vec2::zeros();
        let mut acc = Vec2::zeros();
        for k in 0..b.len() {
            let n = b.values[k];
            let id = b.node_ids[k];
            vbar += s.v[id] * n;
            acc += s.acc[id] * n;
        }
        p.strain += strain_increment(b, &s.v, dt);
        p.stress = stress(&p.strain, c[i], m.k_f, &m.lame);
        p.c = c[i];
        p.u += vbar * dt;
        p.x += vbar * dt;
        p.a = acc;
        p.v += acc * dt;
    });
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| !grid.contains(&p.x)) {
        return Err(Error::ParticleEscaped {
            particle: i,
            step,
            x: p.x[0],
            y: p.x[1],
        });
    }
    Ok(())
}
