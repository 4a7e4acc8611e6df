//! Tensor-product B-spline background grid.
//!
//! Each axis carries an open uniform knot vector on `[0, 1]`; physical
//! coordinates map affinely onto the parameter space. Basis functions are
//! evaluated with the Cox–de Boor recursion together with their first and
//! second derivatives.

use arrayvec::ArrayVec;

use crate::math::{rotation, Mat2, Vec2};
use crate::{Error, Result};

/// Largest supported polynomial order.
pub const MAX_ORDER: usize = 3;
/// Upper bound on the number of basis functions supported at a point.
pub const MAX_SUPPORT: usize = (MAX_ORDER + 1) * (MAX_ORDER + 1);

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    order: usize,
}

impl KnotVector {
    /// Open knot vector with `spans` uniform interior spans.
    pub fn open_uniform(spans: usize, order: usize) -> Result<Self> {
        if spans == 0 {
            return Err(Error::InvalidGrid("knot vector needs at least one span".into()));
        }
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidGrid(format!(
                "spline order {order} not supported (1..={MAX_ORDER})"
            )));
        }
        let mut knots = Vec::with_capacity(spans + 2 * order + 1);
        knots.extend(std::iter::repeat_n(0.0, order));
        for i in 0..=spans {
            knots.push(i as f64 / spans as f64);
        }
        // Guard against the last interior entry rounding below 1.
        *knots.last_mut().unwrap() = 1.0;
        knots.extend(std::iter::repeat_n(1.0, order));
        Ok(Self { knots, order })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn spans(&self) -> usize {
        self.knots.len() - 2 * self.order - 1
    }

    pub fn control_points(&self) -> usize {
        self.knots.len() - self.order - 1
    }

    /// Greville abscissa of basis function `i` (parameter space).
    pub fn greville(&self, i: usize) -> f64 {
        let p = self.order;
        self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64
    }

    /// Index `s` with `knots[s] <= u < knots[s+1]`; the right end maps to the last span.
    pub fn find_span(&self, u: f64) -> usize {
        let p = self.order;
        let n = self.control_points() - 1;
        if u >= self.knots[n + 1] {
            return n;
        }
        if u <= self.knots[p] {
            return p;
        }
        // Uniform interior spacing: direct index, then correct for rounding.
        let spans = self.spans();
        let mut s = p + ((u * spans as f64).floor() as usize).min(spans - 1);
        while s > p && u < self.knots[s] {
            s -= 1;
        }
        while s < n && u >= self.knots[s + 1] {
            s += 1;
        }
        s
    }

    /// Values and derivatives (up to second order) of the `order + 1` basis
    /// functions nonzero on span `s`, in parameter space.
    ///
    /// `out[k][j]` is the k-th derivative of basis function `s - order + j`.
    pub fn ders(&self, s: usize, u: f64) -> [[f64; MAX_ORDER + 1]; 3] {
        let p = self.order;
        let k = &self.knots;
        let mut ndu = [[0.0; MAX_ORDER + 1]; MAX_ORDER + 1];
        let mut left = [0.0; MAX_ORDER + 1];
        let mut right = [0.0; MAX_ORDER + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - k[s + 1 - j];
            right[j] = k[s + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut out = [[0.0; MAX_ORDER + 1]; 3];
        for j in 0..=p {
            out[0][j] = ndu[j][p];
        }
        let nder = p.min(2);
        let mut a = [[0.0; MAX_ORDER + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=nder {
                let mut d = 0.0;
                let rk = r as isize - kk as isize;
                let pk = p - kk;
                if r >= kk {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { kk - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                    d += a[s2][kk] * ndu[r][pk];
                }
                out[kk][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for kk in 1..=nder {
            for j in 0..=p {
                out[kk][j] *= fac;
            }
            fac *= (p - kk) as f64;
        }
        out
    }
}

/// Basis functions supported at one point with global-frame derivatives
/// (or material-frame derivatives after [`rotate_derivatives`]).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasisEval {
    pub node_ids: ArrayVec<usize, MAX_SUPPORT>,
    pub values: ArrayVec<f64, MAX_SUPPORT>,
    pub gradients: ArrayVec<Vec2, MAX_SUPPORT>,
    pub hessians: ArrayVec<Mat2, MAX_SUPPORT>,
}

impl BasisEval {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid {
    pub x_knots: KnotVector,
    pub y_knots: KnotVector,
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub h: f64,
}

/// Builds a grid over `[origin, origin + extent]` with cell size `h`.
pub fn build_grid(origin: [f64; 2], extent: [f64; 2], h: f64, order: usize) -> Result<SplineGrid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidGrid(format!("cell size h = {h} must be positive")));
    }
    let mut spans = [0usize; 2];
    for (axis, name) in ['x', 'y'].into_iter().enumerate() {
        let e = extent[axis];
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "extent along {name} must be positive, got {e}"
            )));
        }
        let n = e / h;
        let r = n.round();
        if r < 1.0 || (n - r).abs() > 1e-9 * r {
            return Err(Error::GridSpacing {
                axis: name,
                extent: e,
                h,
            });
        }
        spans[axis] = r as usize;
    }
    Ok(SplineGrid {
        x_knots: KnotVector::open_uniform(spans[0], order)?,
        y_knots: KnotVector::open_uniform(spans[1], order)?,
        origin,
        extent,
        h,
    })
}

impl SplineGrid {
    pub fn order(&self) -> usize {
        self.x_knots.order()
    }

    pub fn spans(&self) -> [usize; 2] {
        [self.x_knots.spans(), self.y_knots.spans()]
    }

    pub fn control_points(&self) -> [usize; 2] {
        [self.x_knots.control_points(), self.y_knots.control_points()]
    }

    pub fn node_count(&self) -> usize {
        let [nx, ny] = self.control_points();
        nx * ny
    }

    pub fn cell_count(&self) -> usize {
        let [sx, sy] = self.spans();
        sx * sy
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        ix + iy * self.x_knots.control_points()
    }

    pub fn node_coords(&self, node: usize) -> (usize, usize) {
        let nx = self.x_knots.control_points();
        (node % nx, node / nx)
    }

    /// Greville point of a node in physical coordinates.
    pub fn node_position(&self, node: usize) -> Vec2 {
        let (ix, iy) = self.node_coords(node);
        Vec2::new(
            self.origin[0] + self.extent[0] * self.x_knots.greville(ix),
            self.origin[1] + self.extent[1] * self.y_knots.greville(iy),
        )
    }

    pub fn upper(&self) -> [f64; 2] {
        [self.origin[0] + self.extent[0], self.origin[1] + self.extent[1]]
    }

    pub fn contains(&self, x: &Vec2) -> bool {
        self.param(x).is_some()
    }

    fn param(&self, x: &Vec2) -> Option<[f64; 2]> {
        let mut u = [0.0; 2];
        for a in 0..2 {
            let t = (x[a] - self.origin[a]) / self.extent[a];
            if !(-1e-12..=1.0 + 1e-12).contains(&t) {
                return None;
            }
            u[a] = t.clamp(0.0, 1.0);
        }
        Some(u)
    }

    fn spans_at(&self, x: &Vec2) -> Result<([f64; 2], [usize; 2])> {
        let u = self.param(x).ok_or(Error::OutOfDomain { x: x[0], y: x[1] })?;
        Ok((u, [self.x_knots.find_span(u[0]), self.y_knots.find_span(u[1])]))
    }

    /// Index of the cell containing `x`.
    pub fn cell_of(&self, x: &Vec2) -> Result<usize> {
        let (_, s) = self.spans_at(x)?;
        let p = self.order();
        Ok((s[0] - p) + (s[1] - p) * self.x_knots.spans())
    }

    /// Node indices supported at `x`, in the same order as [`SplineGrid::eval`].
    pub fn support(&self, x: &Vec2) -> Result<ArrayVec<usize, MAX_SUPPORT>> {
        let (_, s) = self.spans_at(x)?;
        let p = self.order();
        let mut ids = ArrayVec::new();
        for jy in 0..=p {
            for jx in 0..=p {
                ids.push(self.node_index(s[0] - p + jx, s[1] - p + jy));
            }
        }
        Ok(ids)
    }

    /// Values, gradients and Hessians of all basis functions supported at `x`.
    pub fn eval(&self, x: &Vec2) -> Result<BasisEval> {
        let (u, s) = self.spans_at(x)?;
        let p = self.order();
        let dx = self.x_knots.ders(s[0], u[0]);
        let dy = self.y_knots.ders(s[1], u[1]);
        let (ax, ay) = (1.0 / self.extent[0], 1.0 / self.extent[1]);
        let mut out = BasisEval::default();
        for jy in 0..=p {
            let (ny, dny, d2ny) = (dy[0][jy], dy[1][jy] * ay, dy[2][jy] * ay * ay);
            for jx in 0..=p {
                let (nx, dnx, d2nx) = (dx[0][jx], dx[1][jx] * ax, dx[2][jx] * ax * ax);
                out.node_ids.push(self.node_index(s[0] - p + jx, s[1] - p + jy));
                out.values.push(nx * ny);
                out.gradients.push(Vec2::new(dnx * ny, nx * dny));
                let cross = dnx * dny;
                out.hessians.push(Mat2::new(d2nx * ny, cross, cross, nx * d2ny));
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper matching the free-function style of the other stages.
pub fn eval_basis(grid: &SplineGrid, x: &Vec2) -> Result<BasisEval> {
    grid.eval(x)
}

/// Expresses derivatives in a frame rotated by `phi`: `g' = R g`, `H' = R H Rᵀ`.
pub fn rotate_derivatives(basis: &BasisEval, phi: f64) -> BasisEval {
    if phi == 0.0 {
        return basis.clone();
    }
    let r = rotation(phi);
    let rt = r.transpose();
    BasisEval {
        node_ids: basis.node_ids.clone(),
        values: basis.values.clone(),
        gradients: basis.gradients.iter().map(|g| r * g).collect(),
        hessians: basis.hessians.iter().map(|hh| r * hh * rt).collect(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActiveSet {
    /// Sorted node indices.
    pub active_nodes: Vec<usize>,
    /// Sorted cell indices.
    pub active_cells: Vec<usize>,
    pub dof_count: usize,
}

/// Union of basis supports of all `points`.
pub fn compute_active(grid: &SplineGrid, points: &[Vec2]) -> Result<ActiveSet> {
    let mut node_flag = vec![false; grid.node_count()];
    let mut cell_flag = vec![false; grid.cell_count()];
    for x in points {
        for id in grid.support(x)? {
            node_flag[id] = true;
        }
        cell_flag[grid.cell_of(x)?] = true;
    }
    let active_nodes: Vec<usize> = (0..node_flag.len()).filter(|&i| node_flag[i]).collect();
    let active_cells = (0..cell_flag.len()).filter(|&i| cell_flag[i]).collect();
    Ok(ActiveSet {
        dof_count: 2 * active_nodes.len(),
        active_nodes,
        active_cells,
    })
}
