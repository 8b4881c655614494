//! Photodynamics of cavity-coupled diamond NV centers.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! core: coupled-mode cavity response, confinement-factor quadrature,
//! the seven-level NV⁻/NV⁰ rate-equation model, the energy-threshold ledger
//! and the calibration fitter. File formats and the command line live in the
//! `nvcav` companion crate.
//!
//! Units are SI throughout (J, s, m, rad/s, W). Photon energies are carried by
//! [`units::PhotonEnergy`], which accepts and reports electronvolts at the
//! boundary. Green laser powers are in mW, matching the per-mW rate
//! coefficients of the kinetic model.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod calib;
pub mod cavity;
mod error;
pub mod interaction;
pub mod kinetics;
pub mod linalg;
pub mod optim;
pub mod thresholds;
pub mod units;

pub use error::{Error, Result};
