//! Physical constants and unit conversions.
//!
//! All physics is done in SI. Electronvolts appear only at the boundary, and
//! every eV↔J conversion goes through [`ELECTRON_VOLT`].

use core::f64::consts::TAU;

use crate::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const REDUCED_PLANCK: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Joules per electronvolt. The only eV↔J factor in the crate.
pub const ELECTRON_VOLT: f64 = 1.602_176_634e-19;
/// Default refractive index of diamond.
pub const DIAMOND_REFRACTIVE_INDEX: f64 = 2.4;

/// Constants bundle handed to code that wants them as a value.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Constants {
    pub speed_of_light: f64,
    pub reduced_planck: f64,
    pub vacuum_permittivity: f64,
    pub diamond_refractive_index: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            speed_of_light: SPEED_OF_LIGHT,
            reduced_planck: REDUCED_PLANCK,
            vacuum_permittivity: VACUUM_PERMITTIVITY,
            diamond_refractive_index: DIAMOND_REFRACTIVE_INDEX,
        }
    }
}

impl Constants {
    /// ε = ε₀·n² of the host dielectric.
    pub fn diamond_permittivity(&self) -> f64 {
        self.vacuum_permittivity * self.diamond_refractive_index * self.diamond_refractive_index
    }
}

/// A photon energy. Stored in eV; converts to J, rad/s and vacuum wavelength.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct PhotonEnergy(f64);

impl PhotonEnergy {
    pub fn from_ev(ev: f64) -> Result<Self> {
        if !(ev > 0.0) || !ev.is_finite() {
            return Err(Error::domain(alloc::format!(
                "photon energy must be positive and finite, got {ev} eV"
            )));
        }
        Ok(PhotonEnergy(ev))
    }

    pub fn from_joules(joules: f64) -> Result<Self> {
        Self::from_ev(joules / ELECTRON_VOLT)
    }

    pub fn from_wavelength(wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::domain(alloc::format!(
                "wavelength must be positive and finite, got {wavelength} m"
            )));
        }
        Self::from_joules(TAU * REDUCED_PLANCK * SPEED_OF_LIGHT / wavelength)
    }

    pub fn from_angular_frequency(omega: f64) -> Result<Self> {
        Self::from_joules(REDUCED_PLANCK * omega)
    }

    pub fn ev(self) -> f64 {
        self.0
    }

    pub fn joules(self) -> f64 {
        self.0 * ELECTRON_VOLT
    }

    /// ω = E/ħ, rad/s.
    pub fn angular_frequency(self) -> f64 {
        self.joules() / REDUCED_PLANCK
    }

    /// Vacuum wavelength λ = 2πc/ω, m.
    pub fn wavelength(self) -> f64 {
        TAU * SPEED_OF_LIGHT / self.angular_frequency()
    }
}

/// Photon energy of light with vacuum wavelength `wavelength` (m).
pub fn energy_from_wavelength(wavelength: f64) -> Result<PhotonEnergy> {
    PhotonEnergy::from_wavelength(wavelength)
}

/// Angular frequency 2πc/λ of light with vacuum wavelength `wavelength` (m).
pub fn angular_frequency(wavelength: f64) -> f64 {
    TAU * SPEED_OF_LIGHT / wavelength
}

/// Permittivity ε₀·n² of a medium with refractive index `n`.
pub fn dielectric_constant(n: f64) -> Result<f64> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::domain(alloc::format!(
            "refractive index must be >= 1, got {n}"
        )));
    }
    Ok(VACUUM_PERMITTIVITY * n * n)
}
