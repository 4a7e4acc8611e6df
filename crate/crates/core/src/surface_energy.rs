//! Direction-dependent toughness `G_c(θ)` from the optimal 1D crack profile.
//!
//! For a crack with direction θ the profile varies only along the normal, and
//! the fourth-order term collapses to `γ̃(θ)·(c'')²` with `γ̃` the 2222
//! component of γ in the crack frame. The profile is found by minimising
//! the 1D functional with cubic Hermite elements.

use rayon::prelude::*;

use crate::phase_field::{rotate_gamma, Full4, GammaTensor};
use crate::{Error, Result};

/// `γ̃(θ)`: fourth-order coefficient along the normal of a crack at angle θ.
pub fn normal_coefficient(gamma: &Full4, theta: f64) -> f64 {
    rotate_gamma(gamma, -theta)[1][1][1][1]
}

const GAUSS: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Hermite shape functions on an element of length `he` at local `t ∈ [0,1]`:
/// values, first and second x-derivatives for dofs (c0, c0', c1, c1').
fn hermite(t: f64, he: f64) -> [[f64; 4]; 3] {
    let (t2, t3) = (t * t, t * t * t);
    [
        [
            1.0 - 3.0 * t2 + 2.0 * t3,
            he * (t - 2.0 * t2 + t3),
            3.0 * t2 - 2.0 * t3,
            he * (t3 - t2),
        ],
        [
            (6.0 * t2 - 6.0 * t) / he,
            1.0 - 4.0 * t + 3.0 * t2,
            (6.0 * t - 6.0 * t2) / he,
            3.0 * t2 - 2.0 * t,
        ],
        [
            (12.0 * t - 6.0) / (he * he),
            (6.0 * t - 4.0) / he,
            (6.0 - 12.0 * t) / (he * he),
            (6.0 * t - 2.0) / he,
        ],
    ]
}

/// Symmetric banded matrix, lower storage `a[i][k] = A[i][i-k]`.
struct Banded {
    a: Vec<[f64; 4]>,
}

impl Banded {
    fn new(n: usize) -> Self {
        Self { a: vec![[0.0; 4]; n] }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        if i >= j {
            self.a[i][i - j] += v;
        }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j < 4 {
            self.a[i][i - j]
        } else {
            0.0
        }
    }

    /// Fixes dof `k` to `value`, moving its column to the right-hand side.
    fn pin(&mut self, b: &mut [f64], k: usize, value: f64) {
        let n = self.a.len();
        for j in k.saturating_sub(3)..(k + 4).min(n) {
            if j != k {
                b[j] -= self.get(j, k) * value;
                if j > k {
                    self.a[j][j - k] = 0.0;
                } else {
                    self.a[k][k - j] = 0.0;
                }
            }
        }
        self.a[k][0] = 1.0;
        b[k] = value;
    }

    /// Cholesky factorisation and solve, overwriting `b` with the solution.
    fn solve(mut self, b: &mut [f64]) -> Result<()> {
        let n = self.a.len();
        for i in 0..n {
            for k in (1..4).rev() {
                if k > i {
                    continue;
                }
                let j = i - k;
                let mut s = self.a[i][k];
                for m in 1..(4 - k) {
                    if m > j {
                        break;
                    }
                    s -= self.a[i][k + m] * self.a[j][m];
                }
                self.a[i][k] = s / self.a[j][0];
            }
            let mut d = self.a[i][0];
            for k in 1..4.min(i + 1) {
                d -= self.a[i][k] * self.a[i][k];
            }
            if !(d > 0.0) {
                return Err(Error::Indefinite(format!("1D profile pivot {d:e} at dof {i}")));
            }
            self.a[i][0] = d.sqrt();
        }
        for i in 0..n {
            let mut s = b[i];
            for k in 1..4.min(i + 1) {
                s -= self.a[i][k] * b[i - k];
            }
            b[i] = s / self.a[i][0];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in 1..4.min(n - i) {
                s -= self.a[i + k][k] * b[i + k];
            }
            b[i] = s / self.a[i][0];
        }
        Ok(())
    }
}

/// Solution of the 1D phase-field equation `F c − 4l0² c'' + 4l0⁴γ̃ c'''' = 1`
/// on a uniform Hermite mesh.
#[derive(Debug, Clone)]
pub struct Profile1d {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub dc: Vec<f64>,
}

impl Profile1d {
    /// Linear search plus Hermite interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        let he = self.x[1] - self.x[0];
        let e = (((x - self.x[0]) / he).floor().max(0.0) as usize).min(n - 2);
        let t = (x - self.x[e]) / he;
        let h = hermite(t, he);
        h[0][0] * self.c[e] + h[0][1] * self.dc[e] + h[0][2] * self.c[e + 1] + h[0][3] * self.dc[e + 1]
    }
}

/// Boundary data at a node: pinned value and optionally pinned slope.
#[derive(Debug, Clone, Copy)]
pub struct Pin {
    pub node: usize,
    pub value: Option<f64>,
    pub slope: Option<f64>,
}

/// Minimises `∫ [F c²/2 − c + 2l0² c'² + 2l0⁴ γ̃ c''²] dx` on `[x0, x1]` with
/// `elements` uniform elements, natural conditions except for `pins`.
pub fn solve_profile(
    x0: f64,
    x1: f64,
    elements: usize,
    l0: f64,
    gamma_tilde: f64,
    f_coef: &(dyn Fn(f64) -> f64 + Sync),
    pins: &[Pin],
) -> Result<Profile1d> {
    let he = (x1 - x0) / elements as f64;
    let ndof = 2 * (elements + 1);
    let mut a = Banded::new(ndof);
    let mut b = vec![0.0; ndof];
    let c2 = 4.0 * l0 * l0;
    let c4 = 4.0 * l0.powi(4) * gamma_tilde;
    for e in 0..elements {
        let xa = x0 + e as f64 * he;
        for &(q, w) in &GAUSS {
            let t = 0.5 * (q + 1.0);
            let wx = 0.5 * w * he;
            let hh = hermite(t, he);
            let f = f_coef(xa + t * he);
            for i in 0..4 {
                b[2 * e + i] += wx * hh[0][i];
                for j in 0..=i {
                    let v = f * hh[0][i] * hh[0][j] + c2 * hh[1][i] * hh[1][j] + c4 * hh[2][i] * hh[2][j];
                    a.add(2 * e + i, 2 * e + j, wx * v);
                }
            }
        }
    }
    for p in pins {
        if let Some(v) = p.value {
            a.pin(&mut b, 2 * p.node, v);
        }
        if let Some(s) = p.slope {
            a.pin(&mut b, 2 * p.node + 1, s);
        }
    }
    a.solve(&mut b)?;
    Ok(Profile1d {
        x: (0..=elements).map(|i| x0 + i as f64 * he).collect(),
        c: b.iter().step_by(2).copied().collect(),
        dc: b.iter().skip(1).step_by(2).copied().collect(),
    })
}

/// `∫ [(c−1)²/(4l0) + l0 c'² + l0³γ̃ c''²] dx` of a profile.
fn profile_integral(p: &Profile1d, l0: f64, gamma_tilde: f64) -> f64 {
    let he = p.x[1] - p.x[0];
    let mut s = 0.0;
    for e in 0..p.x.len() - 1 {
        let u = [p.c[e], p.dc[e], p.c[e + 1], p.dc[e + 1]];
        for &(q, w) in &GAUSS {
            let hh = hermite(0.5 * (q + 1.0), he);
            let ev = |k: usize| (0..4).map(|i| hh[k][i] * u[i]).sum::<f64>();
            let (c, d1, d2) = (ev(0), ev(1), ev(2));
            s += 0.5 * w * he * ((c - 1.0).powi(2) / (4.0 * l0) + l0 * d1 * d1 + l0.powi(3) * gamma_tilde * d2 * d2);
        }
    }
    s
}

/// Ḡc times the minimum of the 1D crack functional on `[−x_lb, x_lb]` with `n_1d` nodes.
///
/// The minimiser is even, so only `[0, x_lb]` is discretised and the result
/// doubled. With γ̃ > 0 the profile is C¹ through the crack and `c'(0) = 0`;
/// with γ̃ = 0 the kink at the crack is left free.
pub fn profile_energy(gamma_tilde: f64, gc_bar: f64, l0: f64, x_lb: f64, n_1d: usize) -> Result<f64> {
    if !(gamma_tilde >= 0.0) {
        return Err(Error::Indefinite(format!(
            "negative fourth-order coefficient {gamma_tilde}"
        )));
    }
    if n_1d < 5 || n_1d.is_multiple_of(2) {
        return Err(Error::config("n_1d", format!("must be odd and at least 5, got {n_1d}")));
    }
    let elements = (n_1d - 1) / 2;
    let pin = Pin {
        node: 0,
        value: Some(0.0),
        slope: (gamma_tilde > 0.0).then_some(0.0),
    };
    let p = solve_profile(0.0, x_lb, elements, l0, gamma_tilde, &|_| 1.0, &[pin])?;
    Ok(2.0 * gc_bar * profile_integral(&p, l0, gamma_tilde))
}

#[derive(Debug, Clone)]
pub struct PolarQuery {
    pub gamma: GammaTensor,
    pub gc_bar: f64,
    pub l0: f64,
    pub theta: Vec<f64>,
    /// Defaults to 50·l0.
    pub x_lb: Option<f64>,
    pub n_1d: usize,
}

impl PolarQuery {
    pub fn new(gamma: GammaTensor, gc_bar: f64, l0: f64, samples: usize) -> Self {
        Self {
            gamma,
            gc_bar,
            l0,
            theta: uniform_angles(samples),
            x_lb: None,
            n_1d: 2001,
        }
    }
}

/// `n` equally spaced angles on `[0, 2π)`.
pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / n as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarResult {
    pub theta: f64,
    pub gc: f64,
    pub gc_reciprocal: f64,
}

#[derive(Debug, Clone)]
pub struct PolarSweep {
    pub results: Vec<PolarResult>,
    pub min: PolarResult,
    pub max: PolarResult,
}

pub fn polar_sweep(q: &PolarQuery) -> Result<PolarSweep> {
    let x_lb = q.x_lb.unwrap_or(50.0 * q.l0);
    if !(q.l0 > 0.0) || !(q.gc_bar > 0.0) {
        return Err(Error::config("polar", "l0 and Gc must be positive"));
    }
    if x_lb < 20.0 * q.l0 {
        return Err(Error::config("polar.x_lb", "half-width must be at least 20·l0"));
    }
    if q.theta.is_empty() {
        return Err(Error::config("polar.samples", "need at least one angle"));
    }
    let results: Vec<PolarResult> = q
        .theta
        .par_iter()
        .map(|&theta| {
            let gt = normal_coefficient(q.gamma.full(), theta).max(0.0);
            let gc = profile_energy(gt, q.gc_bar, q.l0, x_lb, q.n_1d)?;
            Ok(PolarResult {
                theta,
                gc,
                gc_reciprocal: 1.0 / gc,
            })
        })
        .collect::<Result<_>>()?;
    let min = *results.iter().min_by(|a, b| a.gc.total_cmp(&b.gc)).unwrap();
    let max = *results.iter().max_by(|a, b| a.gc.total_cmp(&b.gc)).unwrap();
    Ok(PolarSweep { results, min, max })
}
