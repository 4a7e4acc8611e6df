//! Small-strain isotropic elasticity with a spectral tensile/compressive split.

use serde::{Deserialize, Serialize};

use crate::math::Mat2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaneMode {
    PlaneStress,
    PlaneStrain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LameParams {
    /// In-plane λ used by the constitutive law (λ* under plane stress).
    pub lambda: f64,
    pub mu: f64,
    pub lambda_3d: f64,
    /// Dilatational wave speed from the 3D λ + 2μ (mm/µs).
    pub c_dil: f64,
}

/// `rho` is in internal units (see [`crate::units`]).
pub fn lame_from_engineering(e: f64, nu: f64, rho: f64, mode: PlaneMode) -> Result<LameParams> {
    if nu >= 0.5 {
        return Err(Error::InvalidMaterial(format!(
            "Poisson ratio {nu} is incompressible or beyond (needs nu < 0.5)"
        )));
    }
    if !(e > 0.0) || !(nu > -1.0) || !(rho > 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "need E > 0, -1 < nu < 0.5, rho > 0 (got E={e}, nu={nu}, rho={rho})"
        )));
    }
    let lambda_3d = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = match mode {
        PlaneMode::PlaneStrain => lambda_3d,
        PlaneMode::PlaneStress => 2.0 * lambda_3d * mu / (lambda_3d + 2.0 * mu),
    };
    Ok(LameParams {
        lambda,
        mu,
        lambda_3d,
        c_dil: ((lambda_3d + 2.0 * mu) / rho).sqrt(),
    })
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn neg(x: f64) -> f64 {
    x.min(0.0)
}

/// Splits a symmetric strain into its positive and negative spectral parts.
pub fn spectral_split(eps: &Mat2) -> (Mat2, Mat2) {
    let (a, b, c) = (eps[(0, 0)], eps[(1, 1)], 0.5 * (eps[(0, 1)] + eps[(1, 0)]));
    let norm = (a * a + b * b + 2.0 * c * c).sqrt();
    if c.abs() <= 1e-14 * norm {
        let plus = Mat2::new(pos(a), 0.0, 0.0, pos(b));
        return (plus, eps - plus);
    }
    let m = 0.5 * (a + b);
    let r = (0.25 * (a - b) * (a - b) + c * c).sqrt();
    let (l1, l2) = (m + r, m - r);
    if l2 >= 0.0 {
        return (*eps, Mat2::zeros());
    }
    if l1 <= 0.0 {
        return (Mat2::zeros(), *eps);
    }
    // One positive and one negative eigenvalue: ε⁺ = λ₁ P₁ with the
    // eigenprojection P₁ = (ε − λ₂ I)/(λ₁ − λ₂), well conditioned here.
    let p1 = (eps - Mat2::identity() * l2) / (l1 - l2);
    let plus = p1 * l1;
    (plus, eps - plus)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEnergy {
    pub psi_plus: f64,
    pub psi_minus: f64,
    pub sigma_plus: Mat2,
    pub sigma_minus: Mat2,
}

pub fn split_energy(eps: &Mat2, lame: &LameParams) -> SplitEnergy {
    let (ep, em) = spectral_split(eps);
    let tr = eps.trace();
    let (l, mu) = (lame.lambda, lame.mu);
    let i = Mat2::identity();
    SplitEnergy {
        psi_plus: 0.5 * l * pos(tr).powi(2) + mu * (ep * ep).trace(),
        psi_minus: 0.5 * l * neg(tr).powi(2) + mu * (em * em).trace(),
        sigma_plus: i * (l * pos(tr)) + ep * (2.0 * mu),
        sigma_minus: i * (l * neg(tr)) + em * (2.0 * mu),
    }
}

/// g(c) = (1 − k_f)c² + k_f with c clamped to [0, 1].
pub fn degradation(c: f64, k_f: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    (1.0 - k_f) * c * c + k_f
}

pub fn stress(eps: &Mat2, c: f64, k_f: f64, lame: &LameParams) -> Mat2 {
    let s = split_energy(eps, lame);
    s.sigma_plus * degradation(c, k_f) + s.sigma_minus
}

pub fn update_history(h_old: f64, psi_plus: f64) -> f64 {
    h_old.max(psi_plus)
}
