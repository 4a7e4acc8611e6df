//! Fourth-order anisotropic phase field: γ-tensor algebra and the per-field
//! linear system `K c = F`.
//!
//! The Voigt matrix acts on `[a11, a22, a12]`, so the fourth-order term of the
//! crack density is `vᵀ γ v` with `v` the Voigt vector of the Hessian of `c`.
//! The expansion to full indices splits each shear slot evenly over its
//! index permutations, which makes `Σ γ_ijkl a_ij a_kl` equal to that form.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::{BasisEval, SplineGrid};
use crate::domain::{Material, MaterialPoint};
use crate::math::{rotation, voigt, Mat2, Vec2};
use crate::sparse::{direct_solve, norm, pcg, CgOutcome, StencilMatrix};
use crate::{Error, Result};

pub type Full4 = [[[[f64; 2]; 2]; 2]; 2];

/// Named entries of the 2D Voigt matrix; missing entries are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaComponents {
    pub g1111: f64,
    pub g2222: f64,
    pub g1122: f64,
    pub g1212: f64,
    pub g1112: f64,
    pub g1222: f64,
}

impl GammaComponents {
    pub fn voigt(&self) -> [[f64; 3]; 3] {
        [
            [self.g1111, self.g1122, self.g1112],
            [self.g1122, self.g2222, self.g1222],
            [self.g1112, self.g1222, self.g1212],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaTensor {
    voigt: [[f64; 3]; 3],
    full: Full4,
}

fn voigt_index(i: usize, j: usize) -> usize {
    if i == j {
        i
    } else {
        2
    }
}

fn shear_weight(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.5
    }
}

pub fn expand_voigt(v: &[[f64; 3]; 3]) -> Full4 {
    let mut out = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[i][j][k][l] = v[voigt_index(i, j)][voigt_index(k, l)] * shear_weight(i, j) * shear_weight(k, l);
                }
            }
        }
    }
    out
}

/// `Σ γ_ijkl a_ij b_kl` over all 16 index tuples.
pub fn full_contract(g: &Full4, a: &Mat2, b: &Mat2) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    s += g[i][j][k][l] * a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    s
}

/// `γ'_mnop = Σ R_mi R_nj R_ok R_pl γ_ijkl` with `R = [[cos, −sin], [sin, cos]]`.
pub fn rotate_gamma(g: &Full4, angle: f64) -> Full4 {
    let r = rotation(angle).transpose();
    let mut out = [[[[0.0; 2]; 2]; 2]; 2];
    for m in 0..2 {
        for n in 0..2 {
            for o in 0..2 {
                for p in 0..2 {
                    let mut s = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            for k in 0..2 {
                                for l in 0..2 {
                                    s += r[(m, i)] * r[(n, j)] * r[(o, k)] * r[(p, l)] * g[i][j][k][l];
                                }
                            }
                        }
                    }
                    out[m][n][o][p] = s;
                }
            }
        }
    }
    out
}

impl GammaTensor {
    pub fn zero() -> Self {
        Self::from_voigt([[0.0; 3]; 3]).unwrap()
    }

    /// γ with `vᵀγv = (a11 + a22)²`, i.e. the fourth-order term `(Δc)²`.
    pub fn laplacian_squared() -> Self {
        Self::from_voigt([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]).unwrap()
    }

    pub fn from_components(c: &GammaComponents) -> Result<Self> {
        Self::from_voigt(c.voigt())
    }

    pub fn from_voigt(voigt: [[f64; 3]; 3]) -> Result<Self> {
        let flat: Vec<f64> = voigt.iter().flatten().copied().collect();
        if flat.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMaterial("gamma entries must be finite".into()));
        }
        for i in 0..3 {
            for j in 0..i {
                if voigt[i][j] != voigt[j][i] {
                    return Err(Error::InvalidMaterial("gamma Voigt matrix must be symmetric".into()));
                }
            }
        }
        let g = Self {
            voigt,
            full: expand_voigt(&voigt),
        };
        let scale = flat.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let min = g.min_directional();
        if min < -1e-12 * scale {
            return Err(Error::InvalidMaterial(format!(
                "gamma is not elliptic: directional coefficient {min:e} < 0"
            )));
        }
        Ok(g)
    }

    /// Smallest `vᵀγv` over unit directions `n`, `v = (n1², n2², n1 n2)`;
    /// this is the fourth-order symbol of the crack density for a Fourier
    /// mode along `n` and must be nonnegative.
    pub fn min_directional(&self) -> f64 {
        (0..4096)
            .map(|i| {
                let (s, c) = (std::f64::consts::PI * i as f64 / 4096.0).sin_cos();
                let v = [c * c, s * s, c * s];
                self.form(&v, &v)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether the Voigt matrix itself is positive semidefinite (stronger
    /// than ellipticity).
    pub fn is_voigt_psd(&self) -> bool {
        let m = nalgebra::Matrix3::from_fn(|i, j| self.voigt[i][j]);
        let scale = m.amax();
        m.symmetric_eigenvalues().min() >= -1e-12 * scale
    }
    pub fn voigt(&self) -> &[[f64; 3]; 3] {
        &self.voigt
    }

    pub fn full(&self) -> &Full4 {
        &self.full
    }

    pub fn components(&self) -> GammaComponents {
        let v = &self.voigt;
        GammaComponents {
            g1111: v[0][0],
            g2222: v[1][1],
            g1122: v[0][1],
            g1212: v[2][2],
            g1112: v[0][2],
            g1222: v[1][2],
        }
    }

    /// `aᵀ γ b` for Voigt vectors.
    pub fn form(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let v = &self.voigt;
        let mut s = 0.0;
        for i in 0..3 {
            s += a[i] * (v[i][0] * b[0] + v[i][1] * b[1] + v[i][2] * b[2]);
        }
        s
    }

    fn apply(&self, b: &[f64; 3]) -> [f64; 3] {
        let v = &self.voigt;
        [0, 1, 2].map(|i| v[i][0] * b[0] + v[i][1] * b[1] + v[i][2] * b[2])
    }

    pub fn is_zero(&self) -> bool {
        self.voigt.iter().flatten().all(|&x| x == 0.0)
    }
}

/// 3D anisotropy tensor (Voigt order 11, 22, 33, 23, 13, 12); construction
/// and validation only.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTensor3d {
    voigt: [[f64; 6]; 6],
}

impl GammaTensor3d {
    pub fn new(voigt: [[f64; 6]; 6]) -> Result<Self> {
        let m = nalgebra::Matrix6::from_fn(|i, j| voigt[i][j]);
        if m.iter().any(|x| !x.is_finite()) || m != m.transpose() {
            return Err(Error::InvalidMaterial("3D gamma must be finite and symmetric".into()));
        }
        let scale = m.amax();
        if m.symmetric_eigenvalues().min() < -1e-12 * scale {
            return Err(Error::InvalidMaterial("3D gamma is not positive semidefinite".into()));
        }
        Ok(Self { voigt })
    }

    pub fn voigt(&self) -> &[[f64; 6]; 6] {
        &self.voigt
    }

    pub fn component(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        fn idx(i: usize, j: usize) -> (usize, f64) {
            match (i.min(j), i.max(j)) {
                (a, b) if a == b => (a, 1.0),
                (1, 2) => (3, 0.5),
                (0, 2) => (4, 0.5),
                _ => (5, 0.5),
            }
        }
        let (a, wa) = idx(i, j);
        let (b, wb) = idx(k, l);
        self.voigt[a][b] * wa * wb
    }
}

/// Linear system of one discrete field over its active nodes.
#[derive(Debug, Clone)]
pub struct PhaseFieldSystem {
    pub k: StencilMatrix,
    pub f: Vec<f64>,
}

impl PhaseFieldSystem {
    pub fn nodes(&self) -> &[usize] {
        self.k.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// Assembles the system for the points `ids`, with `basis[i]` material-frame
/// derivatives of point `i` and `history[i]` its driving history value.
pub fn assemble(
    grid: &SplineGrid,
    points: &[MaterialPoint],
    ids: &[usize],
    basis: &[BasisEval],
    materials: &[Material],
    history: &[f64],
) -> PhaseFieldSystem {
    let n_nodes = grid.node_count();
    let mut flag = vec![false; n_nodes];
    for &p in ids {
        for &n in &basis[p].node_ids {
            flag[n] = true;
        }
    }
    let rows: Vec<usize> = (0..n_nodes).filter(|&i| flag[i]).collect();
    let [nx, ny] = grid.control_points();
    let mut k = StencilMatrix::new(rows, nx, ny, grid.order());
    let mut f = vec![0.0; k.dim()];

    // Upper-triangular local blocks in parallel, scattered in point order.
    let blocks: Vec<Vec<f64>> = ids
        .par_iter()
        .map(|&p| {
            let b = &basis[p];
            let mp = &points[p];
            let m = &materials[mp.material];
            let vol = mp.volume;
            let fp = m.f_coefficient(history[p]);
            let c2 = 4.0 * m.l0 * m.l0;
            let c4 = 4.0 * m.l0.powi(4);
            let w: Vec<[f64; 3]> = b.hessians.iter().map(voigt).collect();
            let gw: Vec<[f64; 3]> = w.iter().map(|x| m.gamma.apply(x)).collect();
            let n = b.len();
            let mut out = Vec::with_capacity(n * (n + 1) / 2);
            for a in 0..n {
                for c in a..n {
                    let fourth = w[c][0] * gw[a][0] + w[c][1] * gw[a][1] + w[c][2] * gw[a][2];
                    out.push(
                        vol * (fp * b.values[a] * b.values[c] + c2 * b.gradients[a].dot(&b.gradients[c]) + c4 * fourth),
                    );
                }
            }
            out
        })
        .collect();
    for (&p, block) in ids.iter().zip(&blocks) {
        let b = &basis[p];
        let vol = points[p].volume;
        let n = b.len();
        let mut idx = 0;
        for a in 0..n {
            let ia = b.node_ids[a];
            f[k.local_index(ia).unwrap()] += b.values[a] * vol;
            for c in a..n {
                let ic = b.node_ids[c];
                k.add(ia, ic, block[idx]);
                if c != a {
                    k.add(ic, ia, block[idx]);
                }
                idx += 1;
            }
        }
    }
    PhaseFieldSystem { k, f }
}

/// Relative CG tolerance of the phase-field solve.
pub const SOLVE_RTOL: f64 = 1e-10;

/// Solves the system in place; `c` holds the warm start (one entry per row).
pub fn solve(system: &PhaseFieldSystem, c: &mut [f64]) -> Result<CgOutcome> {
    if system.is_empty() {
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }
    let n = system.k.dim();
    match pcg(&system.k, &system.f, c, SOLVE_RTOL, 10 * n + 1000) {
        Err(Error::Indefinite(why)) => {
            // A γ tensor that is elliptic but not pointwise PSD can make K
            // indefinite; the stationary point is still well defined.
            if !INDEFINITE_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!("phase-field system is indefinite ({why}); using a direct solve");
            }
            let target = SOLVE_RTOL * norm(&system.f);
            let (x, residual) = direct_solve(&system.k, &system.f, target, 3)?;
            if !(residual <= target) {
                return Err(Error::SolverDiverged {
                    iterations: 0,
                    residual,
                    target,
                });
            }
            c.copy_from_slice(&x);
            Ok(CgOutcome {
                iterations: 0,
                residual,
            })
        }
        other => other,
    }
}

static INDEFINITE_WARNED: AtomicBool = AtomicBool::new(false);

/// Phase field and derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPhase {
    pub c: f64,
    /// Gradient in the frame of the supplied basis.
    pub grad: Vec2,
    /// Second derivatives in the frame of the supplied basis.
    pub hess: Mat2,
    pub g: f64,
}

impl PointPhase {
    pub fn intact() -> Self {
        Self {
            c: 1.0,
            grad: Vec2::zeros(),
            hess: Mat2::zeros(),
            g: 1.0,
        }
    }
}

/// Interpolates nodal values `c_nodal` (indexed by global node id).
pub fn interpolate_c(basis: &BasisEval, c_nodal: &[f64], k_f: f64) -> PointPhase {
    let mut c = 0.0;
    let mut grad = Vec2::zeros();
    let mut hess = Mat2::zeros();
    for i in 0..basis.len() {
        let ci = c_nodal[basis.node_ids[i]];
        c += basis.values[i] * ci;
        grad += basis.gradients[i] * ci;
        hess += basis.hessians[i] * ci;
    }
    PointPhase {
        c,
        grad,
        hess,
        g: crate::constitutive::degradation(c, k_f),
    }
}

/// Ḡc·Z: crack surface energy per unit volume at a point (material-frame
/// derivatives).
pub fn crack_density(phase: &PointPhase, m: &Material) -> f64 {
    let v = voigt(&phase.hess);
    let l0 = m.l0;
    m.gc * ((phase.c - 1.0).powi(2) / (4.0 * l0) + l0 * phase.grad.norm_squared() + l0.powi(3) * m.gamma.form(&v, &v))
}

/// Nodal residual `R = S(c) − F` (dense over all grid nodes) and its norm.
pub fn residual(
    grid: &SplineGrid,
    points: &[MaterialPoint],
    ids: &[usize],
    basis: &[BasisEval],
    c_nodal: &[f64],
    materials: &[Material],
    history: &[f64],
) -> (Vec<f64>, f64) {
    let mut r = vec![0.0; grid.node_count()];
    for &p in ids {
        let b = &basis[p];
        let mp = &points[p];
        let m = &materials[mp.material];
        let ph = interpolate_c(b, c_nodal, m.k_f);
        let vol = mp.volume;
        let fp = m.f_coefficient(history[p]);
        let c2 = 4.0 * m.l0 * m.l0;
        let c4 = 4.0 * m.l0.powi(4);
        let gv = m.gamma.apply(&voigt(&ph.hess));
        for i in 0..b.len() {
            let w = voigt(&b.hessians[i]);
            let s = fp * ph.c * b.values[i]
                + c2 * ph.grad.dot(&b.gradients[i])
                + c4 * (gv[0] * w[0] + gv[1] * w[1] + gv[2] * w[2]);
            r[b.node_ids[i]] += vol * (s - b.values[i]);
        }
    }
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    (r, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::{build_grid, rotate_derivatives};
    use crate::constitutive::PlaneMode;
    use crate::domain::{discretize, seed_precrack, Body, BodyShape, InitialVelocity, PreCrack};
    use std::f64::consts::PI;

    fn cubic() -> GammaTensor {
        GammaTensor::from_components(&GammaComponents {
            g1111: 1.0,
            g2222: 1.0,
            g1212: 74.0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn expansion_examples() {
        let a = Mat2::new(0.3, -1.2, -1.2, 2.0);
        let lap = GammaTensor::laplacian_squared();
        assert!((full_contract(lap.full(), &a, &a) - a.trace().powi(2)).abs() < 1e-14);
        let shear = GammaTensor::from_components(&GammaComponents {
            g1212: 1.0,
            ..Default::default()
        })
        .unwrap();
        assert!((full_contract(shear.full(), &a, &a) - a[(0, 1)].powi(2)).abs() < 1e-14);
        assert_eq!(full_contract(GammaTensor::zero().full(), &a, &a), 0.0);
        // Full-index sum agrees with the Voigt form for every tensor.
        let g = cubic();
        let v = voigt(&a);
        assert!((full_contract(g.full(), &a, &a) - g.form(&v, &v)).abs() < 1e-12);
    }

    #[test]
    fn full_tensor_symmetries() {
        let g = GammaTensor::from_components(&GammaComponents {
            g1111: 1.0,
            g2222: 2900.0,
            g1222: 74.0,
            ..Default::default()
        })
        .unwrap();
        let t = g.full();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert_eq!(t[i][j][k][l], t[j][i][k][l]);
                        assert_eq!(t[i][j][k][l], t[i][j][l][k]);
                        assert_eq!(t[i][j][k][l], t[k][l][i][j]);
                    }
                }
            }
        }
    }

    #[test]
    fn ellipticity_validation() {
        let bad = GammaComponents {
            g1111: 1.0,
            g2222: 1.0,
            g1122: -5.0,
            ..Default::default()
        };
        assert!(GammaTensor::from_components(&bad).is_err());
        // The anisotropic-plate set is elliptic although its Voigt matrix is not PSD.
        let plate = GammaTensor::from_components(&GammaComponents {
            g1111: 1.0,
            g2222: 2900.0,
            g1222: 74.0,
            ..Default::default()
        })
        .unwrap();
        assert!(!plate.is_voigt_psd());
        assert!(plate.min_directional() > 0.99);
        assert!(cubic().is_voigt_psd());
    }

    fn max_diff(a: &Full4, b: &Full4) -> f64 {
        let mut m = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m = m.max((a[i][j][k][l] - b[i][j][k][l]).abs());
                    }
                }
            }
        }
        m
    }

    #[test]
    fn rotation_examples() {
        let g = cubic();
        assert!(max_diff(&rotate_gamma(g.full(), 0.0), g.full()) < 1e-15);
        assert!(max_diff(&rotate_gamma(g.full(), PI / 2.0), g.full()) < 1e-12);
        assert!(max_diff(&rotate_gamma(g.full(), PI / 4.0), g.full()) > 1.0);
        let lap = GammaTensor::laplacian_squared();
        for a in [0.2, 1.0, 2.7] {
            assert!(max_diff(&rotate_gamma(lap.full(), a), lap.full()) < 1e-14);
        }
        // Rotating the tensor and contracting equals contracting rotated arguments.
        let a = Mat2::new(0.3, -1.2, -1.2, 2.0);
        let phi = 0.77;
        let q = rotation(phi);
        let lhs = full_contract(&rotate_gamma(g.full(), phi), &a, &a);
        let rhs = full_contract(g.full(), &(q * a * q.transpose()), &(q * a * q.transpose()));
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn gamma_3d_component_layout() {
        let mut v = [[0.0; 6]; 6];
        v[0][0] = 1.0;
        v[5][5] = 8.0;
        let g = GammaTensor3d::new(v).unwrap();
        assert_eq!(g.component(0, 0, 0, 0), 1.0);
        assert_eq!(g.component(0, 1, 1, 0), 2.0);
        v[0][1] = 1.0;
        assert!(GammaTensor3d::new(v).is_err());
    }

    struct Problem {
        grid: SplineGrid,
        points: Vec<MaterialPoint>,
        materials: Vec<Material>,
        basis: Vec<BasisEval>,
        ids: Vec<usize>,
    }

    fn problem(gamma: GammaTensor, phi: f64, shape: BodyShape, h: f64, ext: [f64; 2]) -> Problem {
        let grid = build_grid([0.0, 0.0], ext, h, 2).unwrap();
        let materials =
            vec![Material::new("m", 1000.0, 0.3, 1.0, 0.5, 0.0, 1.0, gamma, phi, PlaneMode::PlaneStrain).unwrap()];
        let body = Body {
            shape,
            material: 0,
            field: 0,
            velocity: InitialVelocity::default(),
        };
        let points = discretize(&body, &materials, &grid, 3, 1.0).unwrap();
        let basis = points
            .iter()
            .map(|p| rotate_derivatives(&grid.eval(&p.x).unwrap(), p.phi))
            .collect();
        let ids = (0..points.len()).collect();
        Problem {
            grid,
            points,
            materials,
            basis,
            ids,
        }
    }

    fn square(lo: f64, hi: f64) -> BodyShape {
        BodyShape::Rectangle {
            min: [lo, lo],
            max: [hi, hi],
        }
    }

    impl Problem {
        fn history(&self) -> Vec<f64> {
            self.points.iter().map(|p| p.history).collect()
        }
        fn system(&self, h: &[f64]) -> PhaseFieldSystem {
            assemble(&self.grid, &self.points, &self.ids, &self.basis, &self.materials, h)
        }
        fn solve_dense(&self, h: &[f64]) -> Vec<f64> {
            let sys = self.system(h);
            let mut c = vec![1.0; sys.f.len()];
            solve(&sys, &mut c).unwrap();
            let mut dense = vec![1.0; self.grid.node_count()];
            for (i, &n) in sys.nodes().iter().enumerate() {
                dense[n] = c[i];
            }
            dense
        }
    }

    #[test]
    fn homogeneous_solution_is_one() {
        let pr = problem(cubic(), 0.4, square(1.0, 5.0), 0.5, [6.0, 6.0]);
        let h = pr.history();
        let sys = pr.system(&h);
        // Row sums equal F when H = 0.
        for (r, &fi) in sys.f.iter().enumerate() {
            let s: f64 = sys.k.row_entries(r).map(|(_, v)| v).sum();
            assert!((s - fi).abs() < 1e-12 * fi.max(1.0));
        }
        let (max, asym) = sys.k.symmetry_defect();
        assert!(asym <= 1e-12 * max);
        let mut c = vec![0.3; sys.f.len()];
        solve(&sys, &mut c).unwrap();
        assert!(c.iter().all(|x| (x - 1.0).abs() < 1e-10));
    }

    fn cracked() -> Problem {
        let mut pr = problem(cubic(), 0.0, square(1.0, 7.0), 0.25, [8.0, 8.0]);
        let crack = PreCrack {
            a: Vec2::new(1.0, 4.0),
            b: Vec2::new(4.0, 4.0),
            magnitude: 1000.0,
            field: None,
        };
        seed_precrack(&mut pr.points, &crack, &pr.materials);
        pr
    }

    #[test]
    fn residual_consistency_and_linearity() {
        let pr = cracked();
        let h = pr.history();
        let sys = pr.system(&h);
        let dense = pr.solve_dense(&h);
        let fnorm = crate::sparse::norm(&sys.f);
        let (_, rn) = residual(&pr.grid, &pr.points, &pr.ids, &pr.basis, &dense, &pr.materials, &h);
        assert!(rn <= 1e-9 * fnorm);

        // Perturbing one nodal value changes R by the matching column of K.
        let node = sys.nodes()[sys.nodes().len() / 2];
        let delta = 1e-3;
        let mut pert = dense.clone();
        pert[node] += delta;
        let (r0, _) = residual(&pr.grid, &pr.points, &pr.ids, &pr.basis, &dense, &pr.materials, &h);
        let (r1, _) = residual(&pr.grid, &pr.points, &pr.ids, &pr.basis, &pert, &pr.materials, &h);
        for &i in sys.nodes() {
            let want = sys.k.get(i, node) * delta;
            assert!((r1[i] - r0[i] - want).abs() < 1e-12);
        }

        // Raising H after the solve exposes a residual.
        let mut h2 = h.clone();
        h2[pr.points.len() / 3] += 50.0;
        let (_, rn2) = residual(&pr.grid, &pr.points, &pr.ids, &pr.basis, &dense, &pr.materials, &h2);
        assert!(rn2 > 1e3 * rn);
    }

    #[test]
    fn seeded_crack_profile() {
        // Crack across the full width so that the far-field check is clean.
        let mut pr = problem(cubic(), 0.0, square(1.0, 15.0), 0.125, [16.0, 16.0]);
        for m in &mut pr.materials {
            m.l0 = 0.25;
        }
        let y = 8.0 + 1.0 / 24.0;
        let crack = PreCrack {
            a: Vec2::new(0.0, y),
            b: Vec2::new(16.0, y),
            magnitude: 1000.0,
            field: None,
        };
        seed_precrack(&mut pr.points, &crack, &pr.materials);
        let dense = pr.solve_dense(&pr.history());
        for (i, p) in pr.points.iter().enumerate() {
            let c = interpolate_c(&pr.basis[i], &dense, 0.0).c;
            let d = (p.x[1] - y).abs();
            if d < 1e-9 {
                assert!(c < 0.05, "c = {c} on the crack");
            }
            if d > 10.0 * 0.25 {
                assert!(c > 0.95, "c = {c} at distance {d}");
            }
        }
    }

    #[test]
    fn scaling_and_mirror_symmetry() {
        let pr = cracked();
        let h = pr.history();
        let sys = pr.system(&h);
        let mut c1 = vec![1.0; sys.f.len()];
        solve(&sys, &mut c1).unwrap();
        let mut scaled = sys.clone();
        let alpha = 7.5;
        scaled.f.iter_mut().for_each(|x| *x *= alpha);
        for r in 0..sys.k.dim() {
            let i = sys.nodes()[r];
            for (j, v) in sys.k.row_entries(r) {
                scaled.k.add(i, j, (alpha - 1.0) * v);
            }
        }
        let mut c2 = vec![1.0; sys.f.len()];
        solve(&scaled, &mut c2).unwrap();
        for (a, b) in c1.iter().zip(&c2) {
            assert!((a - b).abs() < 1e-8);
        }

        // The square and the crack are symmetric about y = 4.
        let dense = pr.solve_dense(&h);
        let [nx, ny] = pr.grid.control_points();
        for iy in 0..ny {
            for ix in 0..nx {
                let a = dense[pr.grid.node_index(ix, iy)];
                let b = dense[pr.grid.node_index(ix, ny - 1 - iy)];
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rotation_equivalence_quarter_turn() {
        // Rotating geometry, history and orientation by π/2 about the grid
        // centre rotates the solution.
        let g = GammaTensor::from_components(&GammaComponents {
            g1111: 3.0,
            g2222: 1.0,
            g1212: 10.0,
            ..Default::default()
        })
        .unwrap();
        let ext = [8.0, 8.0];
        let mut a = problem(g.clone(), 0.3, square(1.0, 7.0), 0.5, ext);
        let mut b = problem(g, 0.3 + PI / 2.0, square(1.0, 7.0), 0.5, ext);
        let centre = Vec2::new(4.0, 4.0);
        let rot = |x: &Vec2| {
            let d = x - centre;
            centre + Vec2::new(-d[1], d[0])
        };
        let ca = PreCrack {
            a: Vec2::new(1.0, 3.1),
            b: Vec2::new(4.6, 4.4),
            magnitude: 1000.0,
            field: None,
        };
        let cb = PreCrack {
            a: rot(&ca.a),
            b: rot(&ca.b),
            ..ca.clone()
        };
        seed_precrack(&mut a.points, &ca, &a.materials);
        seed_precrack(&mut b.points, &cb, &b.materials);
        let da = a.solve_dense(&a.history());
        let db = b.solve_dense(&b.history());
        let mut checked = 0;
        for (i, p) in a.points.iter().enumerate() {
            let q = rot(&p.x);
            let j = b.points.iter().position(|r| (r.x - q).norm() < 1e-9).unwrap();
            let va = interpolate_c(&a.basis[i], &da, 0.0).c;
            let vb = interpolate_c(&b.basis[j], &db, 0.0).c;
            assert!((va - vb).abs() < 1e-6, "{va} vs {vb}");
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn monotone_driving() {
        let pr = cracked();
        let h = pr.history();
        let base = pr.solve_dense(&h);
        let p = pr
            .points
            .iter()
            .position(|p| (p.x - Vec2::new(5.5, 4.5)).norm() < 0.1)
            .unwrap();
        let node = {
            let b = &pr.basis[p];
            let k = (0..b.len())
                .max_by(|&i, &j| b.values[i].partial_cmp(&b.values[j]).unwrap())
                .unwrap();
            b.node_ids[k]
        };
        let mut prev = base[node];
        for bump in [1.0, 10.0, 100.0, 1000.0] {
            let mut h2 = h.clone();
            h2[p] += bump;
            let c = pr.solve_dense(&h2)[node];
            assert!(c <= prev + 1e-12);
            prev = c;
        }
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let pr = problem(cubic(), 0.0, square(1.0, 5.0), 0.5, [6.0, 6.0]);
        let ones = vec![1.0; pr.grid.node_count()];
        let ph = interpolate_c(&pr.basis[5], &ones, 0.0);
        assert!((ph.c - 1.0).abs() < 1e-14 && ph.grad.norm() < 1e-12 && (ph.g - 1.0).abs() < 1e-14);
        // Greville interpolation is exact for linear fields.
        let lin: Vec<f64> = (0..pr.grid.node_count())
            .map(|n| {
                let x = pr.grid.node_position(n);
                0.2 + 0.1 * x[0] - 0.05 * x[1]
            })
            .collect();
        for (i, p) in pr.points.iter().enumerate() {
            let ph = interpolate_c(&pr.basis[i], &lin, 0.0);
            assert!((ph.c - (0.2 + 0.1 * p.x[0] - 0.05 * p.x[1])).abs() < 1e-12);
            assert!((ph.grad - Vec2::new(0.1, -0.05)).norm() < 1e-12);
            assert!(ph.hess.norm() < 1e-10);
        }
        let mut over = ones.clone();
        over.iter_mut().for_each(|x| *x = 1.02);
        let ph = interpolate_c(&pr.basis[0], &over, 0.0);
        assert!((ph.c - 1.02).abs() < 1e-12);
        assert_eq!(ph.g, 1.0);
    }

    #[test]
    fn strip_matches_1d_oracle() {
        use crate::surface_energy::solve_profile;
        // γ2222 only couples c,22 to itself, so a crack spanning the strip
        // leaves an exactly one-dimensional discrete problem.
        let g = GammaTensor::from_components(&GammaComponents {
            g1111: 1.0,
            g2222: 1.0,
            ..Default::default()
        })
        .unwrap();
        let shape = BodyShape::Rectangle {
            min: [1.0, 1.0],
            max: [3.0, 15.0],
        };
        let mut pr = problem(g, 0.0, shape, 0.125, [4.0, 16.0]);
        let (l0, gc, b) = (0.5, 1.0, 1000.0);
        let y0 = 8.0;
        let crack = PreCrack {
            a: Vec2::new(0.0, y0),
            b: Vec2::new(4.0, y0),
            magnitude: b,
            field: None,
        };
        seed_precrack(&mut pr.points, &crack, &pr.materials);
        let dense = pr.solve_dense(&pr.history());
        let hist = |y: f64| {
            let d = (y - y0).abs();
            if d < l0 {
                b * gc / (4.0 * l0) * (1.0 - d / l0)
            } else {
                0.0
            }
        };
        let f = |y: f64| 4.0 * l0 * hist(y) / gc + 1.0;
        let oracle = solve_profile(1.0, 15.0, 5600, l0, 1.0, &f, &[]).unwrap();
        let mut worst = 0.0f64;
        let mut samples = 0;
        for (i, p) in pr.points.iter().enumerate() {
            if (p.x[0] - 2.0 - 1.0 / 48.0).abs() > 1e-9 {
                continue;
            }
            let c = interpolate_c(&pr.basis[i], &dense, 0.0).c;
            worst = worst.max((c - oracle.eval(p.x[1])).abs());
            samples += 1;
        }
        assert!(samples > 300);
        assert!(oracle.eval(y0) < 0.05);
        assert!(worst < 0.02, "L∞ deviation {worst}");
    }
}
