//! Sparse symmetric matrices on the structured B-spline node lattice.
//!
//! Two basis functions of order q interact only if their lattice indices differ
//! by at most q along each axis, so every row is stored as a dense
//! `(2q+1) × (2q+1)` stencil of offsets.

use rayon::prelude::*;

use crate::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct StencilMatrix {
    half: usize,
    width: usize,
    nx: usize,
    ny: usize,
    rows: Vec<usize>,
    local: Vec<u32>,
    coords: Vec<(usize, usize)>,
    data: Vec<f64>,
}

impl StencilMatrix {
    /// Zero matrix over the given (sorted, unique) global node rows of a
    /// lattice with `nx × ny` nodes and basis order `order`.
    pub fn new(rows: Vec<usize>, nx: usize, ny: usize, order: usize) -> Self {
        let half = order;
        let width = 2 * half + 1;
        let mut local = vec![NONE; nx * ny];
        for (i, &r) in rows.iter().enumerate() {
            local[r] = i as u32;
        }
        let coords = rows.iter().map(|&r| (r % nx, r / nx)).collect();
        let data = vec![0.0; rows.len() * width * width];
        Self {
            half,
            width,
            nx,
            ny,
            rows,
            local,
            coords,
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Local row index of a global node, if present.
    pub fn local_index(&self, node: usize) -> Option<usize> {
        match self.local.get(node) {
            Some(&l) if l != NONE => Some(l as usize),
            _ => None,
        }
    }

    fn slot(&self, row: usize, col_node: usize) -> usize {
        let (rx, ry) = self.coords[row];
        let (cx, cy) = (col_node % self.nx, col_node / self.nx);
        let dx = cx + self.half - rx;
        let dy = cy + self.half - ry;
        debug_assert!(dx < self.width && dy < self.width, "entry outside stencil");
        row * self.width * self.width + dy * self.width + dx
    }

    /// Adds `v` to entry (row node `i`, column node `j`); both must be rows.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let r = self.local[i] as usize;
        let s = self.slot(r, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = match self.local_index(i) {
            Some(r) => r,
            None => return 0.0,
        };
        let (rx, ry) = self.coords[r];
        let (cx, cy) = (j % self.nx, j / self.nx);
        if cx + self.half < rx || cy + self.half < ry || cx > rx + self.half || cy > ry + self.half {
            return 0.0;
        }
        self.data[self.slot(r, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|r| self.data[self.slot(r, self.rows[r])]).collect()
    }

    /// Largest absolute entry and largest asymmetry `|K_ij − K_ji|`.
    pub fn symmetry_defect(&self) -> (f64, f64) {
        let mut max = 0.0f64;
        let mut asym = 0.0f64;
        for (r, &i) in self.rows.iter().enumerate() {
            for (j, v) in self.row_entries(r) {
                max = max.max(v.abs());
                asym = asym.max((v - self.get(j, i)).abs());
            }
        }
        (max, asym)
    }

    /// Nonzero-slot (column node, value) pairs of local row `r`.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (rx, ry) = self.coords[r];
        let w = self.width;
        let base = r * w * w;
        (0..w * w).filter_map(move |k| {
            let (dx, dy) = (k % w, k / w);
            let cx = (rx + dx).checked_sub(self.half)?;
            let cy = (ry + dy).checked_sub(self.half)?;
            if cx >= self.nx || cy >= self.ny {
                return None;
            }
            let v = self.data[base + k];
            (v != 0.0).then_some((cx + cy * self.nx, v))
        })
    }

    /// `y = A x` in local indexing.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let w = self.width;
        let h = self.half as isize;
        let nx = self.nx as isize;
        let ny = self.ny as isize;
        let kernel = |(r, out): (usize, &mut f64)| {
            let (rx, ry) = self.coords[r];
            let base = r * w * w;
            let mut acc = 0.0;
            for dy in 0..w {
                let cy = ry as isize + dy as isize - h;
                if cy < 0 || cy >= ny {
                    continue;
                }
                for dx in 0..w {
                    let cx = rx as isize + dx as isize - h;
                    if cx < 0 || cx >= nx {
                        continue;
                    }
                    let l = self.local[(cx + cy * nx) as usize];
                    if l != NONE {
                        acc += self.data[base + dy * w + dx] * x[l as usize];
                    }
                }
            }
            *out = acc;
        };
        if self.dim() > 4096 {
            y.par_iter_mut().enumerate().for_each(|(r, o)| kernel((r, o)));
        } else {
            y.iter_mut().enumerate().for_each(kernel);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients; `x` holds the initial guess.
///
/// Converged when `‖b − A x‖ ≤ rtol · ‖b‖`.
pub fn pcg(a: &StencilMatrix, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> Result<CgOutcome> {
    let n = a.dim();
    let target = rtol * norm(b);
    let diag = a.diagonal();
    if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::Indefinite(format!("diagonal entry {d} at node {}", a.rows()[i])));
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rn = norm(&r);
    if rn <= target {
        return Ok(CgOutcome {
            iterations: 0,
            residual: rn,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Indefinite(format!("pᵀAp = {pap:e} at CG iteration {it}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rn = norm(&r);
        if rn <= target {
            return Ok(CgOutcome {
                iterations: it,
                residual: rn,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: rn,
        target,
    })
}

/// Banded LU factorization with partial pivoting, for matrices on which CG
/// breaks down (symmetric but indefinite).
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &StencilMatrix) -> Result<Self> {
        let n = a.dim();
        let mut k = 0;
        for r in 0..n {
            for (j, _) in a.row_entries(r) {
                if let Some(c) = a.local_index(j) {
                    k = k.max(r.abs_diff(c));
                }
            }
        }
        // Column-major band storage with room for pivoting fill: A(i,j) lives
        // at row kl + ku + i − j of column j.
        let (kl, ku) = (k, k);
        let ld = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            ld,
            ab: vec![0.0; ld * n],
            piv: vec![0; n],
        };
        for r in 0..n {
            for (j, v) in a.row_entries(r) {
                if let Some(c) = a.local_index(j) {
                    let s = lu.at(r, c);
                    lu.ab[s] = v;
                }
            }
        }
        let mut ju = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let p = (0..=km)
                .max_by(|&s, &t| lu.ab[lu.at(j + s, j)].abs().total_cmp(&lu.ab[lu.at(j + t, j)].abs()))
                .unwrap_or(0);
            lu.piv[j] = j + p;
            let d = lu.ab[lu.at(j + p, j)];
            if !(d.abs() > 0.0) || !d.is_finite() {
                return Err(Error::Indefinite(format!("singular pivot at row {}", a.rows()[j])));
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let (x, y) = (lu.at(j, c), lu.at(j + p, c));
                    lu.ab.swap(x, y);
                }
            }
            for t in 1..=km {
                let s = lu.at(j + t, j);
                lu.ab[s] /= d;
            }
            for c in j + 1..=ju {
                let u = lu.ab[lu.at(j, c)];
                if u != 0.0 {
                    for t in 1..=km {
                        let l = lu.ab[lu.at(j + t, j)];
                        let s = lu.at(j + t, c);
                        lu.ab[s] -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    fn at(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ld
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl) = (self.n, self.kl);
        let mut x = b.to_vec();
        for j in 0..n {
            x.swap(j, self.piv[j]);
            for t in 1..=kl.min(n - 1 - j) {
                x[j + t] -= self.ab[self.at(j + t, j)] * x[j];
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.ab[self.at(j, j)];
            for i in j.saturating_sub(kl + self.ku)..j {
                x[i] -= self.ab[self.at(i, j)] * x[j];
            }
        }
        x
    }
}

/// Direct solve with up to `refine` steps of iterative refinement, stopping
/// once `‖b − A x‖ ≤ target`. Returns `x` and the final residual norm.
pub fn direct_solve(a: &StencilMatrix, b: &[f64], target: f64, refine: usize) -> Result<(Vec<f64>, f64)> {
    let lu = BandLu::factor(a)?;
    let mut x = lu.solve(b);
    let mut r = vec![0.0; b.len()];
    for it in 0..=refine {
        a.matvec(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let res = norm(&r);
        if res <= target || it == refine {
            return Ok((x, res));
        }
        let dx = lu.solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 5-point Laplacian plus identity on a 6×5 lattice (order 1 stencil).
    fn laplacian() -> StencilMatrix {
        let (nx, ny) = (6, 5);
        let rows: Vec<usize> = (0..nx * ny).collect();
        let mut a = StencilMatrix::new(rows, nx, ny, 1);
        for iy in 0..ny {
            for ix in 0..nx {
                let i = ix + iy * nx;
                a.add(i, i, 5.0);
                if ix + 1 < nx {
                    a.add(i, i + 1, -1.0);
                    a.add(i + 1, i, -1.0);
                }
                if iy + 1 < ny {
                    a.add(i, i + nx, -1.0);
                    a.add(i + nx, i, -1.0);
                }
            }
        }
        a
    }

    #[test]
    fn matvec_matches_entries() {
        let a = laplacian();
        let x: Vec<f64> = (0..a.dim()).map(|i| (i as f64).sin()).collect();
        let mut y = vec![0.0; a.dim()];
        a.matvec(&x, &mut y);
        for r in 0..a.dim() {
            let want: f64 = a.row_entries(r).map(|(j, v)| v * x[j]).sum();
            assert!((y[r] - want).abs() < 1e-14);
        }
        let (max, asym) = a.symmetry_defect();
        assert_eq!(max, 5.0);
        assert_eq!(asym, 0.0);
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = laplacian();
        let xs: Vec<f64> = (0..a.dim()).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut b = vec![0.0; a.dim()];
        a.matvec(&xs, &mut b);
        let mut x = vec![0.0; a.dim()];
        let out = pcg(&a, &b, &mut x, 1e-12, 200).unwrap();
        assert!(out.iterations > 0);
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn banded_lu_solves_indefinite_system() {
        let mut a = laplacian();
        for i in 0..a.dim() {
            a.add(i, i, -3.7);
        }
        assert!(a.diagonal().iter().all(|d| *d > 0.0));
        let xs: Vec<f64> = (0..a.dim()).map(|i| (0.37 * i as f64).sin()).collect();
        let mut b = vec![0.0; a.dim()];
        a.matvec(&xs, &mut b);
        let mut x0 = vec![0.0; a.dim()];
        assert!(matches!(pcg(&a, &b, &mut x0, 1e-12, 500), Err(Error::Indefinite(_))));
        let (x, res) = direct_solve(&a, &b, 0.0, 0).unwrap();
        assert!(res < 1e-12 * norm(&b), "{res}");
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn banded_lu_matches_cg_on_spd_system() {
        let a = laplacian();
        let b: Vec<f64> = (0..a.dim()).map(|i| 1.0 + (i % 7) as f64).collect();
        let mut x = vec![0.0; a.dim()];
        pcg(&a, &b, &mut x, 1e-13, 200).unwrap();
        let (y, _) = direct_solve(&a, &b, 0.0, 0).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn partial_rows() {
        // Rows 0, 1 and 7 of an 6-wide lattice; 7 is the diagonal neighbour of 0.
        let mut a = StencilMatrix::new(vec![0, 1, 7], 6, 3, 1);
        a.add(0, 7, 2.0);
        assert_eq!(a.get(0, 7), 2.0);
        assert_eq!(a.get(0, 12), 0.0);
        assert_eq!(a.local_index(7), Some(2));
        assert_eq!(a.local_index(2), None);
    }

    #[test]
    fn non_convergence_is_reported() {
        let a = laplacian();
        let b = vec![1.0; a.dim()];
        let mut x = vec![0.0; a.dim()];
        assert!(matches!(
            pcg(&a, &b, &mut x, 1e-14, 1),
            Err(Error::SolverDiverged { iterations: 1, .. })
        ));
    }
}
