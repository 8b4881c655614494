//! Coupled-mode description of a fiber-taper-coupled microdisk mode.
//!
//! Detuning follows Δ = ω_cav − ω throughout. A singlet mode is a single
//! travelling-wave resonance; a doublet is the standing-wave pair split by
//! backscattering at rate γ_β.

mod fit;

use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::units::{self, PhotonEnergy, SPEED_OF_LIGHT};
use crate::{Error, Result};

pub use fit::{fit_lineshape, FitModel, LineshapeFit, LineshapeFitOptions, LorentzianDip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Lineshape {
    #[default]
    Singlet,
    Doublet,
}

/// Fitted coupled-mode parameters of one resonance plus its figures of merit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CavityMode {
    pub label: String,
    pub lineshape: Lineshape,
    /// Vacuum wavelength of the resonance, m.
    pub resonance_wavelength: f64,
    /// Total energy decay rate κ, rad/s.
    pub kappa: f64,
    /// Taper coupling rate κ_ex, rad/s.
    pub kappa_ex: f64,
    /// Backscattering rate γ_β, rad/s (0 for a singlet).
    pub gamma_beta: f64,
    /// Peak-energy-density mode volume V_o, m³.
    pub mode_volume: f64,
    /// Group index n_g.
    pub group_index: f64,
}

impl CavityMode {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(alloc::format!("cavity mode '{}': {what}", self.label)));
        if !(self.resonance_wavelength > 0.0) {
            return bad("resonance wavelength must be positive");
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return bad("kappa must be positive");
        }
        if !(self.kappa_ex >= 0.0 && self.kappa_ex <= self.kappa) {
            return bad("kappa_ex must lie in [0, kappa]");
        }
        if !(self.gamma_beta >= 0.0) {
            return bad("gamma_beta must be non-negative");
        }
        if !(self.mode_volume > 0.0) {
            return bad("mode volume must be positive");
        }
        if !(self.group_index >= 1.0) {
            return bad("group index must be >= 1");
        }
        Ok(())
    }

    /// ω_cav, rad/s.
    pub fn resonance_frequency(&self) -> f64 {
        units::angular_frequency(self.resonance_wavelength)
    }

    /// Loaded quality factor ω_cav/κ.
    pub fn loaded_q(&self) -> f64 {
        self.resonance_frequency() / self.kappa
    }

    /// Detuning Δ = ω_cav − ω of a laser at vacuum wavelength `wavelength`.
    pub fn detuning_at(&self, wavelength: f64) -> f64 {
        self.resonance_frequency() - units::angular_frequency(wavelength)
    }

    /// Photon energy at the resonance.
    pub fn photon_energy(&self) -> PhotonEnergy {
        PhotonEnergy::from_wavelength(self.resonance_wavelength)
            .expect("validated resonance wavelength")
    }
}

/// Mode volume from a value expressed in cubic material wavelengths (λ/n)³.
pub fn mode_volume_from_cubic_wavelengths(volume: f64, wavelength: f64, refractive_index: f64) -> f64 {
    volume * (wavelength / refractive_index).powi(3)
}

fn input_photon_flux(power: f64, photon_energy: PhotonEnergy) -> f64 {
    power / photon_energy.joules()
}

fn lorentz_amplitude(kappa: f64, detuning: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(kappa / 2.0, -detuning)
}

/// Mean intracavity photon number of a singlet,
/// `N = |√κ_ex / (κ/2 − iΔ)|² · P/ħω`.
pub fn photons_singlet(mode: &CavityMode, detuning: f64, power: f64, photon_energy: PhotonEnergy) -> f64 {
    let denom = (mode.kappa / 2.0).powi(2) + detuning * detuning;
    mode.kappa_ex / denom * input_photon_flux(power, photon_energy)
}

/// Mean intracavity photon number of a backscatter-split doublet: the
/// coherent sum of two half-coupled standing-wave modes at Δ ± γ_β/2.
pub fn photons_doublet(mode: &CavityMode, detuning: f64, power: f64, photon_energy: PhotonEnergy) -> f64 {
    let half = mode.gamma_beta / 2.0;
    let coupling = (mode.kappa_ex / 2.0).sqrt();
    let amp = (lorentz_amplitude(mode.kappa, detuning + half)
        + lorentz_amplitude(mode.kappa, detuning - half))
        * coupling;
    amp.norm_sqr() * input_photon_flux(power, photon_energy)
}

/// Photon number using the mode's own lineshape.
pub fn photons(mode: &CavityMode, detuning: f64, power: f64, photon_energy: PhotonEnergy) -> f64 {
    match mode.lineshape {
        Lineshape::Singlet => photons_singlet(mode, detuning, power, photon_energy),
        Lineshape::Doublet => photons_doublet(mode, detuning, power, photon_energy),
    }
}

pub(crate) fn transmission_singlet_raw(kappa: f64, kappa_ex: f64, detuning: f64) -> f64 {
    (Complex64::new(1.0, 0.0) - lorentz_amplitude(kappa, detuning) * kappa_ex).norm_sqr()
}

pub(crate) fn transmission_doublet_raw(kappa: f64, kappa_ex: f64, gamma_beta: f64, detuning: f64) -> f64 {
    let half = gamma_beta / 2.0;
    let t = Complex64::new(1.0, 0.0)
        - (lorentz_amplitude(kappa, detuning + half) + lorentz_amplitude(kappa, detuning - half))
            * (kappa_ex / 2.0);
    t.norm_sqr()
}

/// Forward transmission past the taper, `|1 − κ_ex/(κ/2 − iΔ)|²` for a
/// singlet and the two-term equivalent for a doublet.
pub fn transmission(mode: &CavityMode, detuning: f64) -> f64 {
    match mode.lineshape {
        Lineshape::Singlet => transmission_singlet_raw(mode.kappa, mode.kappa_ex, detuning),
        Lineshape::Doublet => {
            transmission_doublet_raw(mode.kappa, mode.kappa_ex, mode.gamma_beta, detuning)
        }
    }
}

/// Peak single-photon intensity in the dielectric, `I = c·ħω / (4·n_g·V_o)`.
pub fn intensity_per_photon(mode: &CavityMode, photon_energy: PhotonEnergy) -> f64 {
    SPEED_OF_LIGHT * photon_energy.joules() / (4.0 * mode.group_index * mode.mode_volume)
}

/// Peak single-photon field `|E|max = √(ħω / (2εV_o))`, V/m.
pub fn peak_field_per_photon(mode: &CavityMode, photon_energy: PhotonEnergy, permittivity: f64) -> Result<f64> {
    if !(permittivity > 0.0) {
        return Err(Error::domain("permittivity must be positive"));
    }
    Ok((photon_energy.joules() / (2.0 * permittivity * mode.mode_volume)).sqrt())
}

/// A transmission scan across one resonance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetuningScan {
    /// Laser vacuum wavelengths, m, strictly ascending.
    pub wavelengths: Vec<f64>,
    pub transmission: Vec<f64>,
    /// Optional photoluminescence per charge-state channel, counts/s.
    pub pl: Option<PlTraces>,
    /// Launched optical power, W. Taper losses are applied downstream.
    pub input_power: f64,
}

/// PL count rates recorded alongside a scan.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlTraces {
    pub nv_zero: Vec<f64>,
    pub nv_minus: Vec<f64>,
    /// PL with the IR laser off, per channel (nv_zero, nv_minus). When absent
    /// the sample with the smallest photon number is used as the reference.
    pub reference: Option<(f64, f64)>,
}

/// Smallest scan accepted by the fitter and the compiler.
pub const MIN_SCAN_POINTS: usize = 16;

impl DetuningScan {
    pub fn validate(&self) -> Result<()> {
        let n = self.wavelengths.len();
        if n < MIN_SCAN_POINTS {
            return Err(Error::invalid(alloc::format!(
                "scan has {n} points, at least {MIN_SCAN_POINTS} required"
            )));
        }
        if self.transmission.len() != n {
            return Err(Error::invalid("wavelength and transmission lengths differ"));
        }
        if let Some(pl) = &self.pl {
            if pl.nv_zero.len() != n || pl.nv_minus.len() != n {
                return Err(Error::invalid("PL trace length differs from scan length"));
            }
        }
        if !self.wavelengths.windows(2).all(|w| w[1] > w[0]) || !(self.wavelengths[0] > 0.0) {
            return Err(Error::invalid("wavelengths must be positive and strictly ascending"));
        }
        if self.transmission.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("transmission contains non-finite values"));
        }
        if !(self.input_power > 0.0) {
            return Err(Error::invalid("input power must be positive"));
        }
        Ok(())
    }

    /// Transmission scan synthesised from a known mode.
    pub fn synthesize(mode: &CavityMode, wavelengths: Vec<f64>, input_power: f64) -> Self {
        let transmission = wavelengths
            .iter()
            .map(|&l| transmission(mode, mode.detuning_at(l)))
            .collect();
        DetuningScan {
            wavelengths,
            transmission,
            pl: None,
            input_power,
        }
    }
}

/// `n` evenly spaced wavelengths covering `±span_linewidths·κ` around the
/// resonance (in frequency), returned ascending.
pub fn scan_wavelengths(mode: &CavityMode, span_linewidths: f64, n: usize) -> Vec<f64> {
    let w0 = mode.resonance_frequency();
    let span = span_linewidths * mode.kappa;
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let f = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
            let omega = w0 - span + 2.0 * span * f;
            2.0 * core::f64::consts::PI * SPEED_OF_LIGHT / omega
        })
        .collect();
    out.reverse();
    out
}
