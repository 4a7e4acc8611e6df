//! Multi-velocity-field contact on the background grid.
//!
//! Sign convention: `n̂_D` is the normalised sum `Σ_p m_p ∇N_I(x_p)`, which
//! points from the particles of field D towards the node, i.e. out of the
//! body, and `n1 = (n̂1 − n̂2)/‖n̂1 − n̂2‖`. Approaching bodies therefore have
//! `γ_n = (v1 − v2)·n1 > 0`, and the admissible state after correction is
//! `γ_n ≤ 0`.

use log::warn;

use crate::dynamics::FieldNodalState;
use crate::math::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams {
    pub mu_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ContactCandidate {
    pub node: usize,
    pub a: usize,
    pub b: usize,
}

/// Nodes where two fields both carry mass above `mass_eps`, sorted by node
/// and then by field pair.
pub fn detect(states: &[FieldNodalState], mass_eps: f64) -> Vec<ContactCandidate> {
    let mut out = Vec::new();
    for a in 0..states.len() {
        for &i in &states[a].active {
            if states[a].mass[i] <= mass_eps {
                continue;
            }
            for (b, sb) in states.iter().enumerate().skip(a + 1) {
                if sb.mass[i] > mass_eps {
                    out.push(ContactCandidate { node: i, a, b });
                }
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerateNormal {
    pub separation: f64,
}

/// Unit normal and tangent of the first field from both mass gradients.
pub fn normals(grad_a: &Vec2, grad_b: &Vec2) -> Result<(Vec2, Vec2), DegenerateNormal> {
    let unit = |g: &Vec2| {
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            Vec2::zeros()
        }
    };
    let d = unit(grad_a) - unit(grad_b);
    let len = d.norm();
    if len < 1e-10 {
        return Err(DegenerateNormal { separation: len });
    }
    let n1 = d / len;
    Ok((n1, Vec2::new(-n1[1], n1[0])))
}

/// Contact response of one field at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldForce {
    pub f_nor: f64,
    pub f_tan: f64,
    pub force: Vec2,
    pub sliding: bool,
}

fn field_force(m: f64, v: &Vec2, v_cm: &Vec2, n: &Vec2, s: &Vec2, dt: f64, mu: f64) -> FieldForce {
    let dv = v_cm - v;
    let f_nor = (m / dt * dv.dot(n)).min(0.0);
    let f_tan_s = m / dt * dv.dot(s);
    let cap = mu * f_nor.abs();
    let sliding = f_tan_s.abs() > cap;
    let f_tan = cap.min(f_tan_s.abs()).copysign(f_tan_s);
    FieldForce {
        f_nor,
        f_tan,
        force: n * f_nor + s * f_tan,
        sliding,
    }
}

/// Pair forces at a node. Returns `None` when the approach gate fails.
#[allow(clippy::too_many_arguments)]
pub fn contact_forces(
    m_a: f64,
    m_b: f64,
    p_a: &Vec2,
    p_b: &Vec2,
    n1: &Vec2,
    s1: &Vec2,
    dt: f64,
    mu_f: f64,
) -> Option<(FieldForce, FieldForce)> {
    let v_cm = (p_a + p_b) / (m_a + m_b);
    let v_a = p_a / m_a;
    let v_b = p_b / m_b;
    if (v_a - v_cm).dot(n1) <= 0.0 {
        return None;
    }
    let (n2, s2) = (-n1, -s1);
    Some((
        field_force(m_a, &v_a, &v_cm, n1, s1, dt, mu_f),
        field_force(m_b, &v_b, &v_cm, &n2, &s2, dt, mu_f),
    ))
}

/// State of a resolved contact node, kept for constraint verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactNode {
    pub node: usize,
    pub pair: (usize, usize),
    pub n1: Vec2,
    pub n2: Vec2,
    pub s1: Vec2,
    pub s2: Vec2,
    pub approach: bool,
    pub force_a: FieldForce,
    pub force_b: FieldForce,
    pub m_a: f64,
    pub m_b: f64,
    pub dt: f64,
    /// Velocities before and after correction.
    pub v_trial: (Vec2, Vec2),
    pub v: (Vec2, Vec2),
}

/// Options for fault injection in tests of the verification path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContactDebug {
    /// Use `n2 = +n1` instead of `−n1`.
    pub invert_normals: bool,
}

/// Computes contact forces at all candidates and corrects the nodal
/// velocities in place. Pairs are processed in candidate order; each pair
/// sees the velocities left by earlier pairs at the same node.
pub fn resolve(
    states: &mut [FieldNodalState],
    candidates: &[ContactCandidate],
    dt: f64,
    params: &ContactParams,
    debug: ContactDebug,
) -> (Vec<ContactNode>, usize) {
    let mut nodes = Vec::with_capacity(candidates.len());
    let mut degenerate = 0;
    for c in candidates {
        let i = c.node;
        let (n1, s1) = match normals(&states[c.a].mass_grad[i], &states[c.b].mass_grad[i]) {
            Ok(n) => n,
            Err(d) => {
                degenerate += 1;
                warn!(
                    "degenerate contact normal at node {i} (separation {:.2e}); skipped",
                    d.separation
                );
                continue;
            }
        };
        let (n2, s2) = if debug.invert_normals { (n1, s1) } else { (-n1, -s1) };
        let (m_a, m_b) = (states[c.a].mass[i], states[c.b].mass[i]);
        let v_trial = (states[c.a].v[i], states[c.b].v[i]);
        let p_a = v_trial.0 * m_a;
        let p_b = v_trial.1 * m_b;
        let v_cm = (p_a + p_b) / (m_a + m_b);
        let approach = (v_trial.0 - v_cm).dot(&n1) > 0.0;
        let zero = FieldForce {
            f_nor: 0.0,
            f_tan: 0.0,
            force: Vec2::zeros(),
            sliding: false,
        };
        let (fa, fb) = if approach {
            (
                field_force(m_a, &v_trial.0, &v_cm, &n1, &s1, dt, params.mu_f),
                field_force(m_b, &v_trial.1, &v_cm, &n2, &s2, dt, params.mu_f),
            )
        } else {
            (zero, zero)
        };
        if approach {
            states[c.a].f_cont[i] += fa.force;
            states[c.b].f_cont[i] += fb.force;
            states[c.a].v[i] = v_trial.0 + fa.force * (dt / m_a);
            states[c.b].v[i] = v_trial.1 + fb.force * (dt / m_b);
        }
        nodes.push(ContactNode {
            node: i,
            pair: (c.a, c.b),
            n1,
            n2,
            s1,
            s2,
            approach,
            force_a: fa,
            force_b: fb,
            m_a,
            m_b,
            dt,
            v_trial,
            v: (states[c.a].v[i], states[c.b].v[i]),
        });
    }
    (nodes, degenerate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    C1,
    C2,
    C3,
    C4,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Check::C1 => "C.1",
            Check::C2 => "C.2",
            Check::C3 => "C.3",
            Check::C4 => "C.4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: Check,
    pub node: usize,
    pub pair: (usize, usize),
    pub quantity: &'static str,
    pub magnitude: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} node {} fields ({}, {}): {} = {:.3e}",
            self.check, self.node, self.pair.0, self.pair.1, self.quantity, self.magnitude
        )
    }
}

/// Tolerance on geometric identities (unit vectors, collinearity).
pub const GEOMETRY_TOL: f64 = 1e-12;
/// Tolerance on relative velocities, mm/µs.
pub const VELOCITY_TOL: f64 = 1e-8;

/// Checks C.1–C.4 at every resolved contact node.
pub fn verify_constraints(nodes: &[ContactNode], params: &ContactParams) -> Vec<Violation> {
    let mut out = Vec::new();
    for c in nodes {
        let mut flag = |check, quantity, magnitude: f64, limit: f64| {
            if !(magnitude <= limit) {
                out.push(Violation {
                    check,
                    node: c.node,
                    pair: c.pair,
                    quantity,
                    magnitude,
                });
            }
        };
        flag(Check::C1, "|n1 + n2|", (c.n1 + c.n2).norm(), GEOMETRY_TOL);
        flag(Check::C1, "|s1 + s2|", (c.s1 + c.s2).norm(), GEOMETRY_TOL);
        flag(Check::C1, "||n1| - 1|", (c.n1.norm() - 1.0).abs(), GEOMETRY_TOL);
        flag(Check::C1, "|n1 . s1|", c.n1.dot(&c.s1).abs(), GEOMETRY_TOL);

        let (fa, fb) = (c.force_a.force, c.force_b.force);
        let scale = fa.norm().max(fb.norm());
        // Each force is m (v_cm - v) / dt; its roundoff scales with the momentum rate.
        let momentum_rate = (c.m_a * c.v_trial.0.norm() + c.m_b * c.v_trial.1.norm()) / c.dt;
        flag(
            Check::C2,
            "|F1 + F2|",
            (fa + fb).norm(),
            GEOMETRY_TOL * scale.max(momentum_rate),
        );

        let rel = c.v.0 - c.v.1;
        let gamma_n = rel.dot(&c.n1);
        let gamma_s = rel.dot(&c.s1);
        for f in [&c.force_a, &c.force_b] {
            flag(Check::C3, "F_nor (must be <= 0)", f.f_nor, 0.0);
            let cone = params.mu_f * f.f_nor.abs();
            flag(
                Check::C4,
                "|F_tan| - mu|F_nor|",
                f.f_tan.abs() - cone,
                GEOMETRY_TOL * cone.max(scale),
            );
        }
        flag(Check::C3, "gamma_n (penetration)", gamma_n, VELOCITY_TOL);
        if c.force_a.f_nor != 0.0 {
            flag(Check::C3, "|gamma_n| with F_nor != 0", gamma_n.abs(), VELOCITY_TOL);
        }
        if c.approach {
            let f = &c.force_a;
            if f.sliding {
                let cone = params.mu_f * f.f_nor.abs();
                flag(
                    Check::C4,
                    "|F_tan| - mu|F_nor| (sliding)",
                    (f.f_tan.abs() - cone).abs(),
                    GEOMETRY_TOL * cone.max(scale),
                );
                // Friction on field 1 opposes its slip relative to field 2.
                flag(
                    Check::C4,
                    "F_tan * gamma_s (sliding)",
                    f.f_tan * gamma_s,
                    VELOCITY_TOL * f.f_tan.abs(),
                );
            } else {
                flag(Check::C4, "|gamma_s| (stick)", gamma_s.abs(), VELOCITY_TOL);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::{build_grid, BasisEval, SplineGrid};
    use crate::constitutive::PlaneMode;
    use crate::domain::{discretize, Body, BodyShape, InitialVelocity, Material, MaterialPoint};
    use crate::dynamics::p2g;
    use crate::phase_field::GammaTensor;

    fn mat() -> Vec<Material> {
        vec![Material::new(
            "m",
            1000.0,
            0.3,
            1.0,
            1.0,
            0.0,
            1.0,
            GammaTensor::zero(),
            0.0,
            PlaneMode::PlaneStrain,
        )
        .unwrap()]
    }

    fn two_bodies(
        a: BodyShape,
        b: BodyShape,
    ) -> (SplineGrid, Vec<MaterialPoint>, Vec<BasisEval>, Vec<FieldNodalState>) {
        let grid = build_grid([0.0, 0.0], [20.0, 10.0], 1.0, 2).unwrap();
        let m = mat();
        let mut pts = Vec::new();
        for (f, shape) in [a, b].into_iter().enumerate() {
            let body = Body {
                shape,
                material: 0,
                field: f,
                velocity: InitialVelocity::default(),
            };
            pts.extend(discretize(&body, &m, &grid, 3, 1.0).unwrap());
        }
        let basis: Vec<BasisEval> = pts.iter().map(|p| grid.eval(&p.x).unwrap()).collect();
        let mut states = vec![FieldNodalState::new(grid.node_count()); 2];
        p2g(&mut states, &pts, &basis);
        (grid, pts, basis, states)
    }

    fn rect(x0: f64, x1: f64) -> BodyShape {
        BodyShape::Rectangle {
            min: [x0, 2.0],
            max: [x1, 8.0],
        }
    }

    #[test]
    fn detection() {
        let (_, _, _, s) = two_bodies(rect(2.0, 6.0), rect(9.5, 14.0));
        assert!(detect(&s, 1e-12).is_empty());
        let (_, _, _, s) = two_bodies(rect(2.0, 8.0), rect(8.0, 14.0));
        let c = detect(&s, 1e-12);
        assert!(!c.is_empty());
        assert!(c.iter().all(|c| c.a == 0 && c.b == 1));
        assert!(detect(&s[..1], 1e-12).is_empty());
    }

    #[test]
    fn half_planes_give_axis_normals_with_mirror_symmetry() {
        let (grid, _, _, s) = two_bodies(rect(2.0, 8.0), rect(8.0, 14.0));
        let cands = detect(&s, 1e-12);
        for c in &cands {
            let (n1, s1) = normals(&s[0].mass_grad[c.node], &s[1].mass_grad[c.node]).unwrap();
            let (ix, iy) = grid.node_coords(c.node);
            // Away from the top/bottom corners the interface is the line x = 8.
            if (4..=7).contains(&iy) {
                assert!((n1 - Vec2::new(1.0, 0.0)).norm() < 1e-12, "{n1:?} at ({ix},{iy})");
            }
            assert!((n1.norm() - 1.0).abs() < 1e-15 && n1.dot(&s1).abs() < 1e-15);
            // Mirror about y = 5.
            let ny = grid.control_points()[1];
            let j = grid.node_index(ix, ny - 1 - iy);
            let (m1, _) = normals(&s[0].mass_grad[j], &s[1].mass_grad[j]).unwrap();
            assert!((m1 - Vec2::new(n1[0], -n1[1])).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_normal() {
        let g = Vec2::new(1.0, 2.0);
        assert!(normals(&g, &(g * 3.0)).is_err());
    }

    #[test]
    fn head_on_equal_masses_stop() {
        let (m, v, dt) = (2.0, 0.3, 0.01);
        let n1 = Vec2::new(1.0, 0.0);
        let s1 = Vec2::new(0.0, 1.0);
        // Field 1 moves along its outward normal, towards field 2.
        let (fa, fb) = contact_forces(m, m, &(n1 * v * m), &(-n1 * v * m), &n1, &s1, dt, 0.3).unwrap();
        assert!((fa.f_nor + m * v / dt).abs() < 1e-12);
        assert!((fb.f_nor + m * v / dt).abs() < 1e-12);
        let va = n1 * v + fa.force * (dt / m);
        let vb = -n1 * v + fb.force * (dt / m);
        assert!(va.norm() < 1e-15 && vb.norm() < 1e-15);
    }

    #[test]
    fn separating_bodies_are_untouched() {
        let n1 = Vec2::new(1.0, 0.0);
        let s1 = Vec2::new(0.0, 1.0);
        assert!(contact_forces(1.0, 1.0, &(-n1 * 0.1), &(n1 * 0.1), &n1, &s1, 0.01, 0.5).is_none());
    }

    #[test]
    fn frictionless_oblique_impact() {
        let (ma, mb, dt) = (1.0, 3.0, 0.01);
        let n1 = Vec2::new(0.6, 0.8);
        let s1 = Vec2::new(-0.8, 0.6);
        let va = n1 * 0.2 + s1 * 0.05;
        let vb = -n1 * 0.1 - s1 * 0.07;
        let (fa, fb) = contact_forces(ma, mb, &(va * ma), &(vb * mb), &n1, &s1, dt, 0.0).unwrap();
        let va2 = va + fa.force * (dt / ma);
        let vb2 = vb + fb.force * (dt / mb);
        let vcm = (va * ma + vb * mb) / (ma + mb);
        assert!((va2.dot(&s1) - va.dot(&s1)).abs() < 1e-15);
        assert!((vb2.dot(&s1) - vb.dot(&s1)).abs() < 1e-15);
        assert!((va2.dot(&n1) - vcm.dot(&n1)).abs() < 1e-15);
        assert!((vb2.dot(&n1) - vcm.dot(&n1)).abs() < 1e-15);
        let before = va * ma + vb * mb;
        let after = va2 * ma + vb2 * mb;
        assert!((before - after).norm() < 1e-15);
    }

    fn single_node(m_a: f64, m_b: f64, va: Vec2, vb: Vec2, mu: f64) -> (Vec<ContactNode>, Vec<FieldNodalState>) {
        let mut s = vec![FieldNodalState::new(1), FieldNodalState::new(1)];
        s[0].mass[0] = m_a;
        s[1].mass[0] = m_b;
        s[0].v[0] = va;
        s[1].v[0] = vb;
        s[0].mass_grad[0] = Vec2::new(-1.0, 0.0);
        s[1].mass_grad[0] = Vec2::new(1.0, 0.0);
        // Outward normals: field 1 lies to the right of the node.
        s[0].active = vec![0];
        s[1].active = vec![0];
        let cands = detect(&s, 0.0);
        let (nodes, _) = resolve(
            &mut s,
            &cands,
            0.01,
            &ContactParams { mu_f: mu },
            ContactDebug::default(),
        );
        (nodes, s)
    }

    #[test]
    fn stick_and_slide() {
        // Field 1 lies to the right, so n1 = −x̂; it approaches moving left.
        let (nodes, s) = single_node(1.0, 2.0, Vec2::new(-0.1, 0.01), Vec2::new(0.0, 0.0), 0.65);
        let c = nodes[0];
        assert!(c.approach && !c.force_a.sliding);
        let vcm = (Vec2::new(-0.1, 0.01) * 1.0) / 3.0;
        assert!((s[0].v[0] - vcm).norm() < 1e-15 && (s[1].v[0] - vcm).norm() < 1e-15);
        assert!(verify_constraints(&nodes, &ContactParams { mu_f: 0.65 }).is_empty());

        let (nodes, _) = single_node(1.0, 2.0, Vec2::new(-0.1, 0.2), Vec2::new(0.0, 0.0), 0.1);
        let c = nodes[0];
        assert!(c.force_a.sliding);
        assert!((c.force_a.f_tan.abs() - 0.1 * c.force_a.f_nor.abs()).abs() < 1e-15);
        let gs = (c.v.0 - c.v.1).dot(&c.s1);
        assert!(gs * c.force_a.f_tan < 0.0);
        assert!(verify_constraints(&nodes, &ContactParams { mu_f: 0.1 }).is_empty());
        let m = c.m_a * (c.v.0 - c.v_trial.0) + c.m_b * (c.v.1 - c.v_trial.1);
        assert!(m.norm() < 1e-15);
    }

    #[test]
    fn gate_failure_is_bitwise_identity() {
        let (va, vb) = (Vec2::new(0.1, 0.3), Vec2::new(-0.2, 0.1));
        let (nodes, s) = single_node(1.0, 2.0, va, vb, 0.5);
        assert!(!nodes[0].approach);
        assert_eq!(s[0].v[0], va);
        assert_eq!(s[1].v[0], vb);
        // Separation with γ_n < 0 is admissible.
        assert!(verify_constraints(&nodes, &ContactParams { mu_f: 0.5 }).is_empty());
    }

    #[test]
    fn inverted_normals_violate_c1() {
        let mut s = vec![FieldNodalState::new(1), FieldNodalState::new(1)];
        for (k, st) in s.iter_mut().enumerate() {
            st.mass[0] = 1.0;
            st.active = vec![0];
            st.mass_grad[0] = Vec2::new(if k == 0 { -1.0 } else { 1.0 }, 0.0);
        }
        s[0].v[0] = Vec2::new(-0.1, 0.0);
        let cands = detect(&s, 0.0);
        let debug = ContactDebug { invert_normals: true };
        let (nodes, _) = resolve(&mut s, &cands, 0.01, &ContactParams { mu_f: 0.1 }, debug);
        let v = verify_constraints(&nodes, &ContactParams { mu_f: 0.1 });
        assert!(v.iter().any(|v| v.check == Check::C1));
    }
}
