//! Small fixed-size linear algebra shared by all modules.

use nalgebra::{Matrix2, Vector2};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Passive rotation taking global components to a frame rotated by `phi`.
pub fn rotation(phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    Mat2::new(c, s, -s, c)
}

/// Symmetric part of a 2×2 matrix.
pub fn sym(m: &Mat2) -> Mat2 {
    (m + m.transpose()) * 0.5
}

/// Packs a symmetric 2×2 tensor as `[a11, a22, a12]`.
pub fn voigt(m: &Mat2) -> [f64; 3] {
    [m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)])]
}

/// Frobenius inner product `a : b`.
pub fn ddot(a: &Mat2, b: &Mat2) -> f64 {
    a.component_mul(b).sum()
}
