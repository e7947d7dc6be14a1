//! Parametric instabilities of bosons in a periodically shaken square lattice
//! with a continuous transverse (tube) direction.
//!
//! The crate is organised bottom-up:
//!
//! * [`special`]: Bessel functions and the 1D band structure giving `J(V0)`.
//! * [`lattice`]: lattice parameters, drive trajectories, dispersions.
//! * [`analytics`]: closed-form Floquet-Bogoliubov rates and cusp frequencies.
//! * [`bdg`]: direct integration of the Bogoliubov mode equations.
//! * [`twa`]: truncated-Wigner ensembles of the driven Gross-Pitaevskii equation.
//! * [`fit`]: rate extraction from decay and growth traces.
//!
//! Internally `hbar = 1` and the lattice spacing is 1, so every energy is an
//! angular frequency in rad/s (or in units of a reference hopping).

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod bdg;
mod error;
pub mod fit;
pub mod lattice;
pub mod special;
pub mod twa;

pub use error::{Error, Result};

/// Engine version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Converts an ordinary frequency in Hz to an angular frequency in rad/s.
pub fn hz_to_rad_s(hz: f64) -> f64 {
    hz * std::f64::consts::TAU
}

/// Converts an angular frequency in rad/s to an ordinary frequency in Hz.
pub fn rad_s_to_hz(rad_s: f64) -> f64 {
    rad_s / std::f64::consts::TAU
}
