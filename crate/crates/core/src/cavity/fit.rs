//! Transmission lineshape fitting.
//!
//! The canonical models are the coherent coupled-mode singlet and doublet.
//! A plain sum of two Lorentzian dips is also available; it reports one loaded
//! Q per dip, which is how split resonances are often quoted.
//!
//! Fits run in angular frequency. Transmission alone cannot tell an
//! under-coupled singlet from the matching over-coupled one, so the singlet
//! fit is restricted to κ_ex ≤ κ/2.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{transmission_doublet_raw, transmission_singlet_raw, CavityMode, DetuningScan, Lineshape};
use crate::optim::{minimize, LmOptions, Residuals};
use crate::units::{self, SPEED_OF_LIGHT};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FitModel {
    Singlet,
    Doublet,
    /// Two independent Lorentzian dips on a unit baseline.
    TwoLorentzian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineshapeFitOptions {
    /// Minimum max−min transmission for a scan to count as containing a dip.
    pub contrast_floor: f64,
    pub max_iterations: usize,
    /// Figures of merit copied onto the fitted mode; transmission does not
    /// determine them.
    pub mode_volume: f64,
    pub group_index: f64,
    pub label: String,
}

impl Default for LineshapeFitOptions {
    fn default() -> Self {
        LineshapeFitOptions {
            contrast_floor: 0.05,
            max_iterations: 500,
            mode_volume: 1e-18,
            group_index: 1.0,
            label: String::from("fitted"),
        }
    }
}

/// One dip of a two-Lorentzian fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LorentzianDip {
    pub center_wavelength: f64,
    /// Full width at half depth, rad/s.
    pub linewidth: f64,
    pub depth: f64,
    pub loaded_q: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LineshapeFit {
    pub model: FitModel,
    pub mode: CavityMode,
    /// Loaded Q of each resolved dip, in ascending wavelength order.
    pub dip_q: Vec<f64>,
    /// Per-dip parameters (two-Lorentzian model only).
    pub dips: Vec<LorentzianDip>,
    /// RMS transmission residual.
    pub rms: f64,
    pub iterations: usize,
}

struct Seed {
    omega0: f64,
    kappa: f64,
    depth_min: f64,
    /// Frequency of a second resolved dip, if any.
    second: Option<(f64, f64)>,
}

fn smooth(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Full width at half depth around index `i` in the (ascending) frequency grid.
fn half_depth_width(omega: &[f64], t: &[f64], i: usize) -> f64 {
    let half = 0.5 * (1.0 + t[i]);
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = i;
        for j in range {
            if t[j] >= half {
                let f = (half - t[prev]) / (t[j] - t[prev]);
                return Some(omega[prev] + f * (omega[j] - omega[prev]));
            }
            prev = j;
        }
        None
    };
    let left = cross(&mut (0..i).rev());
    let right = cross(&mut ((i + 1)..omega.len()));
    match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (omega[i] - l),
        (None, Some(r)) => 2.0 * (r - omega[i]),
        (None, None) => (omega[omega.len() - 1] - omega[0]) / 4.0,
    }
}

fn seed(omega: &[f64], t: &[f64]) -> Seed {
    let ts = smooth(t);
    let imin = (0..ts.len())
        .min_by(|&a, &b| ts[a].partial_cmp(&ts[b]).unwrap_or(core::cmp::Ordering::Equal))
        .unwrap_or(0);
    let kappa = half_depth_width(omega, &ts, imin).abs().max(1e-12 * omega[imin]);
    let depth_min = ts[imin].clamp(0.0, 1.0);

    // second dip: deepest local minimum outside the first dip's FWHM
    let first_depth = 1.0 - ts[imin];
    let second = (1..ts.len() - 1)
        .filter(|&j| ts[j] <= ts[j - 1] && ts[j] <= ts[j + 1])
        .filter(|&j| (omega[j] - omega[imin]).abs() > kappa)
        .filter(|&j| 1.0 - ts[j] > 0.3 * first_depth)
        .filter(|&j| {
            // a real dip rises back between the two minima
            let (a, b) = if j < imin { (j, imin) } else { (imin, j) };
            let peak = ts[a..=b].iter().cloned().fold(f64::MIN, f64::max);
            peak - ts[j].max(ts[imin]) > 0.1 * first_depth
        })
        .min_by(|&a, &b| ts[a].partial_cmp(&ts[b]).unwrap_or(core::cmp::Ordering::Equal))
        .map(|j| (omega[j], ts[j]));

    Seed {
        omega0: omega[imin],
        kappa,
        depth_min,
        second,
    }
}

struct CoupledModeProblem<'a> {
    omega: &'a [f64],
    t: &'a [f64],
    reference: f64,
    scale: f64,
    doublet: bool,
}

impl CoupledModeProblem<'_> {
    /// x = [(ω_cav − ref)/s, ln(κ/s), u, γ/s] with κ_ex = f_max·κ·sin²u.
    fn unpack(&self, x: &[f64]) -> (f64, f64, f64, f64) {
        let omega_cav = self.reference + x[0] * self.scale;
        let kappa = self.scale * x[1].exp();
        let frac_max = if self.doublet { 1.0 } else { 0.5 };
        let kappa_ex = frac_max * kappa * x[2].sin().powi(2);
        let gamma = if self.doublet { (x[3] * self.scale).abs() } else { 0.0 };
        (omega_cav, kappa, kappa_ex, gamma)
    }
}

impl Residuals for CoupledModeProblem<'_> {
    fn len(&self) -> usize {
        self.omega.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> bool {
        let (omega_cav, kappa, kappa_ex, gamma) = self.unpack(x);
        if !kappa.is_finite() || kappa <= 0.0 {
            return false;
        }
        for ((o, &w), &t) in out.iter_mut().zip(self.omega).zip(self.t) {
            let d = omega_cav - w;
            let model = if self.doublet {
                transmission_doublet_raw(kappa, kappa_ex, gamma, d)
            } else {
                transmission_singlet_raw(kappa, kappa_ex, d)
            };
            *o = model - t;
        }
        true
    }
}

struct TwoLorentzianProblem<'a> {
    omega: &'a [f64],
    t: &'a [f64],
    reference: f64,
    scale: f64,
}

impl TwoLorentzianProblem<'_> {
    /// x = [c1, ln w1, a1, c2, ln w2, a2] in units of the scale.
    fn dip(&self, x: &[f64], k: usize) -> (f64, f64, f64) {
        let c = self.reference + x[3 * k] * self.scale;
        let w = self.scale * x[3 * k + 1].exp();
        (c, w, x[3 * k + 2])
    }
}

impl Residuals for TwoLorentzianProblem<'_> {
    fn len(&self) -> usize {
        self.omega.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> bool {
        let dips = [self.dip(x, 0), self.dip(x, 1)];
        for ((o, &w), &t) in out.iter_mut().zip(self.omega).zip(self.t) {
            let mut model = 1.0;
            for &(c, width, a) in &dips {
                let hw = width / 2.0;
                model -= a * hw * hw / ((w - c).powi(2) + hw * hw);
            }
            *o = model - t;
        }
        true
    }
}

fn rms(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len().max(1) as f64).sqrt()
}

fn wavelength_of(omega: f64) -> f64 {
    core::f64::consts::TAU * SPEED_OF_LIGHT / omega
}

/// Least-squares fit of a transmission scan.
///
/// Initial values are derived from the data: the resonance from the
/// transmission minimum, κ from the dip's full width at half depth, κ_ex from
/// its depth, and γ_β from the separation of two resolved dips (a fraction of
/// κ when only one dip is visible).
pub fn fit_lineshape(scan: &DetuningScan, model: FitModel, opts: &LineshapeFitOptions) -> Result<LineshapeFit> {
    scan.validate()?;
    let tmax = scan.transmission.iter().cloned().fold(f64::MIN, f64::max);
    let tmin = scan.transmission.iter().cloned().fold(f64::MAX, f64::min);
    if tmax - tmin < opts.contrast_floor {
        return Err(Error::NoResonance {
            contrast: tmax - tmin,
            floor: opts.contrast_floor,
        });
    }

    // ascending frequency = descending wavelength
    let omega: Vec<f64> = scan.wavelengths.iter().rev().map(|&l| units::angular_frequency(l)).collect();
    let t: Vec<f64> = scan.transmission.iter().rev().cloned().collect();
    let s = seed(&omega, &t);
    let scale = s.kappa;
    let reference = s.omega0;
    let lm = LmOptions {
        max_iterations: opts.max_iterations,
        ..LmOptions::default()
    };

    match model {
        FitModel::Singlet | FitModel::Doublet => {
            let doublet = model == FitModel::Doublet;
            let (center, gamma) = match (doublet, s.second) {
                (true, Some((w2, _))) => (0.5 * (s.omega0 + w2), (w2 - s.omega0).abs()),
                (true, None) => (s.omega0, 0.5 * s.kappa),
                (false, _) => (s.omega0, 0.0),
            };
            // depth: singlet T_min = (1 − 2κ_ex/κ)², resolved doublet dip ≈ (1 − κ_ex/κ)²
            let frac = (1.0 - s.depth_min.sqrt()).clamp(0.05, 0.95);
            let u = frac.sqrt().asin();
            let problem = CoupledModeProblem {
                omega: &omega,
                t: &t,
                reference,
                scale,
                doublet,
            };
            let mut x0 = vec![(center - reference) / scale, 0.0, u];
            if doublet {
                x0.push(gamma / scale);
            }
            let report = minimize(&problem, &x0, &lm);
            let (omega_cav, kappa, kappa_ex, gamma) = problem.unpack(&report.x);
            let mode = CavityMode {
                label: opts.label.clone(),
                lineshape: if doublet { Lineshape::Doublet } else { Lineshape::Singlet },
                resonance_wavelength: wavelength_of(omega_cav),
                kappa,
                kappa_ex,
                gamma_beta: gamma,
                mode_volume: opts.mode_volume,
                group_index: opts.group_index,
            };
            let dip_q = if doublet {
                vec![(omega_cav + gamma / 2.0) / kappa, (omega_cav - gamma / 2.0) / kappa]
            } else {
                vec![omega_cav / kappa]
            };
            let fit = LineshapeFit {
                model,
                mode,
                dip_q,
                dips: Vec::new(),
                rms: rms(&report.residuals),
                iterations: report.iterations,
            };
            if report.converged() {
                Ok(fit)
            } else {
                Err(Error::FitNonConvergence {
                    iterations: report.iterations,
                    best: Box::new(fit),
                })
            }
        }
        FitModel::TwoLorentzian => {
            let depth = 1.0 - s.depth_min;
            let (c2, d2) = match s.second {
                Some((w2, t2)) => (w2, 1.0 - t2),
                None => (s.omega0 + 0.5 * s.kappa, 0.5 * depth),
            };
            let problem = TwoLorentzianProblem {
                omega: &omega,
                t: &t,
                reference,
                scale,
            };
            let x0 = [0.0, 0.0, depth, (c2 - reference) / scale, 0.0, d2];
            let report = minimize(&problem, &x0, &lm);
            let mut dips: Vec<LorentzianDip> = (0..2)
                .map(|k| {
                    let (c, w, a) = problem.dip(&report.x, k);
                    LorentzianDip {
                        center_wavelength: wavelength_of(c),
                        linewidth: w,
                        depth: a,
                        loaded_q: c / w,
                    }
                })
                .collect();
            dips.sort_by(|a, b| {
                a.center_wavelength
                    .partial_cmp(&b.center_wavelength)
                    .unwrap_or(core::cmp::Ordering::Equal)
            });
            // equivalent coupled-mode doublet: shared κ, split by the dip separation
            let (w_a, w_b) = (
                units::angular_frequency(dips[0].center_wavelength),
                units::angular_frequency(dips[1].center_wavelength),
            );
            let kappa = 0.5 * (dips[0].linewidth + dips[1].linewidth);
            let mean_depth = (0.5 * (dips[0].depth + dips[1].depth)).clamp(0.0, 1.0);
            let mode = CavityMode {
                label: opts.label.clone(),
                lineshape: Lineshape::Doublet,
                resonance_wavelength: wavelength_of(0.5 * (w_a + w_b)),
                kappa,
                kappa_ex: kappa * (1.0 - (1.0 - mean_depth).sqrt()),
                gamma_beta: (w_a - w_b).abs(),
                mode_volume: opts.mode_volume,
                group_index: opts.group_index,
            };
            let fit = LineshapeFit {
                model,
                mode,
                dip_q: dips.iter().map(|d| d.loaded_q).collect(),
                dips,
                rms: rms(&report.residuals),
                iterations: report.iterations,
            };
            if report.converged() {
                Ok(fit)
            } else {
                Err(Error::FitNonConvergence {
                    iterations: report.iterations,
                    best: Box::new(fit),
                })
            }
        }
    }
}
