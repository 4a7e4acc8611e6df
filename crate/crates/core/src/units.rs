//! Conversion of user-facing quantities into the internal mm–µs–N system.
//!
//! In that system the unit of mass is N·µs²/mm = 1e-9 kg, so a density
//! given in kg/m³ (= 1e-9 kg/mm³) maps onto exactly one internal unit per mm³.

/// Internal density per kg/m³.
pub const DENSITY_PER_KG_M3: f64 = 1.0;

/// Internal acceleration (mm/µs²) per m/s².
pub const ACCEL_PER_M_S2: f64 = 1e-9;

/// Internal velocity (mm/µs) per m/s.
pub const VELOCITY_PER_M_S: f64 = 1e-3;

pub fn density_from_kg_m3(rho: f64) -> f64 {
    rho * DENSITY_PER_KG_M3
}

pub fn accel_from_m_s2(a: f64) -> f64 {
    a * ACCEL_PER_M_S2
}

pub fn velocity_to_m_s(v: f64) -> f64 {
    v / VELOCITY_PER_M_S
}
