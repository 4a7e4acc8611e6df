//! Phase-field material point method for dynamic anisotropic brittle fracture.
//!
//! The crate is organised bottom-up: [`bspline`] provides the background grid,
//! [`constitutive`] and [`phase_field`] the material models, [`dynamics`] and
//! [`contact`] the explicit MPM stages, and [`solver`] ties them together into
//! the staggered time-stepping scheme. [`surface_energy`] is a standalone
//! evaluator of the direction-dependent toughness `G_c(theta)`.
//!
//! Units throughout are mm, µs, N (stress in N/mm², energy in mJ).

// `!(x > 0.0)` guards deliberately reject NaN; index loops mirror the tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bspline;
pub mod config;
pub mod constitutive;
pub mod contact;
pub mod diagnostics;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod math;
pub mod output;
pub mod phase_field;
pub mod solver;
pub mod sparse;
pub mod surface_energy;
pub mod units;

pub use error::{Error, Result};
