//! Seven-level NV⁻/NV⁰ rate equations.
//!
//! Levels 1–4 belong to NV⁻ (³A₂, ³E, ¹A₁, ¹E) and levels 5–7 to NV⁰
//! (⁴A₂, ²E, ²A₂). The generator `G` acts on column vectors of populations,
//! `ṗ = G·p`, with `G[to][from]` holding the rate of each transition.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::linalg::{Mat7, Vec7, N, ZERO7};
use crate::{Error, Result};

mod modulation;
mod propagate;
mod steady;

pub use modulation::{dc_contrast, modulation_contrast, ContrastOptions, ContrastResult};
pub use propagate::{propagate, Propagator, Segment, Waveform};
pub use steady::{closed_classes, pl_sweep, steady_state, steady_state_from, steady_state_rates, SweepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Level {
    /// ³A₂, NV⁻ ground state.
    #[cfg_attr(feature = "serde", serde(rename = "3A2"))]
    NvMinusGround,
    /// ³E, NV⁻ excited state.
    #[cfg_attr(feature = "serde", serde(rename = "3E"))]
    NvMinusExcited,
    /// ¹A₁, singlet excited state.
    #[cfg_attr(feature = "serde", serde(rename = "1A1"))]
    SingletExcited,
    /// ¹E, singlet ground state.
    #[cfg_attr(feature = "serde", serde(rename = "1E"))]
    SingletGround,
    /// ⁴A₂, NV⁰ quartet.
    #[cfg_attr(feature = "serde", serde(rename = "4A2"))]
    Quartet,
    /// ²E, NV⁰ ground state.
    #[cfg_attr(feature = "serde", serde(rename = "2E"))]
    NvZeroGround,
    /// ²A₂, NV⁰ excited state.
    #[cfg_attr(feature = "serde", serde(rename = "2A2"))]
    NvZeroExcited,
}

impl Level {
    pub const ALL: [Level; N] = [
        Level::NvMinusGround,
        Level::NvMinusExcited,
        Level::SingletExcited,
        Level::SingletGround,
        Level::Quartet,
        Level::NvZeroGround,
        Level::NvZeroExcited,
    ];

    /// 1-based level number.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_number(n: usize) -> Option<Level> {
        n.checked_sub(1).and_then(|i| Level::ALL.get(i).copied())
    }

    /// ASCII term symbol, e.g. `3A2`.
    pub fn name(self) -> &'static str {
        ["3A2", "3E", "1A1", "1E", "4A2", "2E", "2A2"][self.index()]
    }

    pub fn from_name(name: &str) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.name() == name)
    }

    pub fn is_nv_minus(self) -> bool {
        self.index() < 4
    }
}

/// Rates that do not depend on the optical drive, Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct InternalRates {
    #[cfg_attr(feature = "serde", serde(rename = "K_f^-"))]
    pub k_f_minus: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K_f^0"))]
    pub k_f_zero: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K_23"))]
    pub k_23: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K_34"))]
    pub k_34: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K_41"))]
    pub k_41: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K_56"))]
    pub k_56: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K_75"))]
    pub k_75: f64,
}

/// Green-driven rates per mW of green power, Hz/mW.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GreenRates {
    #[cfg_attr(feature = "serde", serde(rename = "K_e^-"))]
    pub k_e_minus: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K_e^0"))]
    pub k_e_zero: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K^i_25,1-G"))]
    pub k_25_1g: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K^r_51,1-G"))]
    pub k_51_1g: f64,
    #[cfg_attr(feature = "serde", serde(rename = "K^r_74,1-G"))]
    pub k_74_1g: f64,
}

/// IR-driven rate coefficients for one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct IrRates {
    /// Two-photon ionization ³E→⁴A₂, Hz/photon².
    #[cfg_attr(feature = "serde", serde(rename = "K^i_25,2-IR"))]
    pub k_25_2ir: f64,
    /// One-photon recombination ²A₂→¹E, Hz/photon.
    #[cfg_attr(feature = "serde", serde(rename = "K^r_74,1-IR"))]
    pub k_74_1ir: f64,
}

/// A full coefficient set with IR coefficients for any number of
/// wavelengths, keyed by a label such as `966nm`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RateCoefficients {
    pub internal: InternalRates,
    #[cfg_attr(feature = "serde", serde(rename = "green_per_mW"))]
    pub green_per_mw: GreenRates,
    pub ir_per_photon: BTreeMap<String, IrRates>,
    /// IR-driven ¹E→¹A₁ excitation, Hz/photon. `None` leaves it out.
    #[cfg_attr(feature = "serde", serde(rename = "K^s_43", default, skip_serializing_if = "Option::is_none"))]
    pub k_43_s: Option<f64>,
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("rate coefficient {name} must be finite and >= 0, got {v}")))
    }
}

impl InternalRates {
    fn validate(&self) -> Result<()> {
        check_nonneg("K_f^-", self.k_f_minus)?;
        check_nonneg("K_f^0", self.k_f_zero)?;
        check_nonneg("K_23", self.k_23)?;
        check_nonneg("K_34", self.k_34)?;
        check_nonneg("K_41", self.k_41)?;
        check_nonneg("K_56", self.k_56)?;
        check_nonneg("K_75", self.k_75)
    }
}

impl GreenRates {
    fn validate(&self) -> Result<()> {
        check_nonneg("K_e^-", self.k_e_minus)?;
        check_nonneg("K_e^0", self.k_e_zero)?;
        check_nonneg("K^i_25,1-G", self.k_25_1g)?;
        check_nonneg("K^r_51,1-G", self.k_51_1g)?;
        check_nonneg("K^r_74,1-G", self.k_74_1g)
    }
}

impl IrRates {
    fn validate(&self) -> Result<()> {
        check_nonneg("K^i_25,2-IR", self.k_25_2ir)?;
        check_nonneg("K^r_74,1-IR", self.k_74_1ir)
    }
}

impl RateCoefficients {
    pub fn validate(&self) -> Result<()> {
        self.internal.validate()?;
        self.green_per_mw.validate()?;
        for ir in self.ir_per_photon.values() {
            ir.validate()?;
        }
        if let Some(k) = self.k_43_s {
            check_nonneg("K^s_43", k)?;
        }
        Ok(())
    }

    /// Picks the IR coefficients for one wavelength label.
    pub fn model(&self, ir_label: &str) -> Result<KineticModel> {
        self.validate()?;
        let ir = self.ir_per_photon.get(ir_label).ok_or_else(|| {
            let known: Vec<&str> = self.ir_per_photon.keys().map(String::as_str).collect();
            Error::Configuration(format!("no IR coefficients for '{ir_label}' (known: {})", known.join(", ")))
        })?;
        Ok(KineticModel {
            internal: self.internal,
            green: self.green_per_mw,
            ir: *ir,
            k_43_s: self.k_43_s.unwrap_or(0.0),
            crosstalk: Crosstalk::default(),
        })
    }
}

/// The coefficient set fitted to the published measurements, with IR
/// coefficients labelled `966nm` and `1524nm`.
pub fn published_fit() -> RateCoefficients {
    let mut ir = BTreeMap::new();
    ir.insert(
        String::from("966nm"),
        IrRates {
            k_25_2ir: 5.5e-3,
            k_74_1ir: 22.8,
        },
    );
    ir.insert(
        String::from("1524nm"),
        IrRates {
            k_25_2ir: 1.7e-6,
            k_74_1ir: 0.6,
        },
    );
    RateCoefficients {
        internal: InternalRates {
            k_f_minus: 77e6,
            k_f_zero: 53e6,
            k_23: 7.9e6,
            k_34: 1e9,
            k_41: 6.5e6,
            k_56: 4e3,
            k_75: 1.4e3,
        },
        green_per_mw: GreenRates {
            k_e_minus: 10e6,
            k_e_zero: 18e6,
            k_25_1g: 10.3e3,
            k_51_1g: 12.6e3,
            k_74_1g: 3e3,
        },
        ir_per_photon: ir,
        k_43_s: None,
    }
}

/// 966 nm IR coefficients refitted with the singlet excitation channel
/// included. The accompanying K^s_43 was not published.
pub fn published_extended_966() -> IrRates {
    IrRates {
        k_25_2ir: 0.11,
        k_74_1ir: 239.0,
    }
}

/// Returns `coeffs` with the IR-driven ¹E→¹A₁ channel switched on.
pub fn enable_singlet_extension(coeffs: &RateCoefficients, k_43_s: f64) -> Result<RateCoefficients> {
    check_nonneg("K^s_43", k_43_s)?;
    Ok(RateCoefficients {
        k_43_s: Some(k_43_s),
        ..coeffs.clone()
    })
}

/// Linear mixing of the two PL channels, `[minus, zero]ᵀ ← M·[minus, zero]ᵀ`,
/// for imperfect spectral separation. Identity by default.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Crosstalk(pub [[f64; 2]; 2]);

impl Default for Crosstalk {
    fn default() -> Self {
        Crosstalk([[1.0, 0.0], [0.0, 1.0]])
    }
}

/// Coefficients for a single simulation: one IR wavelength selected.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KineticModel {
    pub internal: InternalRates,
    pub green: GreenRates,
    pub ir: IrRates,
    /// Hz/photon; zero for the base model.
    pub k_43_s: f64,
    pub crosstalk: Crosstalk,
}

/// Constant optical drive.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Drive {
    /// Green power, mW.
    pub green_power: f64,
    /// Mean intracavity IR photon number.
    pub n_ir: f64,
}

impl Drive {
    pub fn new(green_power: f64, n_ir: f64) -> Result<Self> {
        let d = Drive { green_power, n_ir };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.green_power >= 0.0) || !self.green_power.is_finite() {
            return Err(Error::domain(format!("green power must be >= 0, got {}", self.green_power)));
        }
        if !(self.n_ir >= 0.0) || !self.n_ir.is_finite() {
            return Err(Error::domain(format!("IR photon number must be >= 0, got {}", self.n_ir)));
        }
        Ok(())
    }
}

/// Instantaneous transition rates, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstantRates {
    pub k_e_minus: f64,
    pub k_f_minus: f64,
    pub k_23: f64,
    pub k_25: f64,
    pub k_34: f64,
    pub k_41: f64,
    /// IR-driven ¹E→¹A₁, zero unless the singlet extension is on.
    pub k_43: f64,
    pub k_51: f64,
    pub k_56: f64,
    pub k_e_zero: f64,
    pub k_f_zero: f64,
    pub k_74: f64,
    pub k_75: f64,
}

impl InstantRates {
    /// Every transition as (from, to, rate).
    pub fn transitions(&self) -> [(Level, Level, f64); 13] {
        use Level::*;
        [
            (NvMinusGround, NvMinusExcited, self.k_e_minus),
            (NvMinusExcited, NvMinusGround, self.k_f_minus),
            (NvMinusExcited, SingletExcited, self.k_23),
            (NvMinusExcited, Quartet, self.k_25),
            (SingletExcited, SingletGround, self.k_34),
            (SingletGround, NvMinusGround, self.k_41),
            (SingletGround, SingletExcited, self.k_43),
            (Quartet, NvMinusGround, self.k_51),
            (Quartet, NvZeroGround, self.k_56),
            (NvZeroGround, NvZeroExcited, self.k_e_zero),
            (NvZeroExcited, NvZeroGround, self.k_f_zero),
            (NvZeroExcited, SingletGround, self.k_74),
            (NvZeroExcited, Quartet, self.k_75),
        ]
    }

    pub fn max_rate(&self) -> f64 {
        self.transitions().iter().map(|t| t.2).fold(0.0, f64::max)
    }
}

/// Power-dependent rates: K_25 = K̄_25,2IR·N² + K_25,1G·P, K_51 = K_51,1G·P,
/// K_74 = K̄_74,1IR·N + K_74,1G·P, K_e = coefficient·P.
pub fn effective_rates(model: &KineticModel, drive: Drive) -> InstantRates {
    let p = drive.green_power;
    let n = drive.n_ir;
    let i = &model.internal;
    let g = &model.green;
    InstantRates {
        k_e_minus: g.k_e_minus * p,
        k_f_minus: i.k_f_minus,
        k_23: i.k_23,
        k_25: model.ir.k_25_2ir * n * n + g.k_25_1g * p,
        k_34: i.k_34,
        k_41: i.k_41,
        k_43: model.k_43_s * n,
        k_51: g.k_51_1g * p,
        k_56: i.k_56,
        k_e_zero: g.k_e_zero * p,
        k_f_zero: i.k_f_zero,
        k_74: model.ir.k_74_1ir * n + g.k_74_1g * p,
        k_75: i.k_75,
    }
}

/// Total decay rate out of ⁴A₂: K_56 + K_51,1G·P.
pub fn effective_quartet_decay(model: &KineticModel, green_power: f64) -> f64 {
    model.internal.k_56 + model.green.k_51_1g * green_power
}

/// Charge-conversion transitions of the model as (process name, from, to).
/// Names match the process catalog in [`crate::thresholds`].
pub const CHARGE_TRANSITIONS: [(&str, Level, Level); 3] = [
    ("K^i_25", Level::NvMinusExcited, Level::Quartet),
    ("K^r_51", Level::Quartet, Level::NvMinusGround),
    ("K^r_74", Level::NvZeroExcited, Level::SingletGround),
];

/// The rate matrix `G` with `ṗ = G·p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator(pub Mat7);

impl Generator {
    pub fn matrix(&self) -> &Mat7 {
        &self.0
    }

    /// Column sums, accumulated as the off-diagonal entries in row order
    /// followed by the diagonal. Assembly sets each diagonal to the negated
    /// sum taken in the same order, so these are exactly zero.
    pub fn column_sums(&self) -> Vec7 {
        let g = &self.0;
        core::array::from_fn(|j| {
            let off = (0..N).filter(|&i| i != j).fold(0.0, |acc, i| acc + g[i][j]);
            off + g[j][j]
        })
    }

    pub fn norm_inf(&self) -> f64 {
        crate::linalg::norm_inf7(&self.0)
    }
}

pub fn assemble_generator(rates: &InstantRates) -> Generator {
    let mut g = ZERO7;
    for (from, to, k) in rates.transitions() {
        g[to.index()][from.index()] += k;
    }
    for j in 0..N {
        let off = (0..N).filter(|&i| i != j).fold(0.0, |acc, i| acc + g[i][j]);
        g[j][j] = -off;
    }
    Generator(g)
}

/// Occupation probabilities of the seven levels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Populations(pub Vec7);

/// Tolerance on population bounds and normalization.
pub const POPULATION_TOL: f64 = 1e-9;

impl Populations {
    /// Validates a population vector and clamps entries into [0, 1].
    pub fn new(p: Vec7) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|v| !v.is_finite() || *v < -POPULATION_TOL || *v > 1.0 + POPULATION_TOL) {
            return Err(Error::invalid(format!("populations out of [0, 1]: {p:?}")));
        }
        if (sum - 1.0).abs() > POPULATION_TOL {
            return Err(Error::invalid(format!("populations sum to {sum}, not 1")));
        }
        Ok(Populations(p.map(|v| v.clamp(0.0, 1.0))))
    }

    /// All population in one level.
    pub fn pure(level: Level) -> Self {
        let mut p = [0.0; N];
        p[level.index()] = 1.0;
        Populations(p)
    }

    pub fn get(&self, level: Level) -> f64 {
        self.0[level.index()]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Total NV⁻ population p₁+…+p₄.
    pub fn nv_minus_fraction(&self) -> f64 {
        self.0[..4].iter().sum()
    }
}

/// Emission rates of the two charge states, Hz (per emitter).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlObservables {
    pub nv_minus: f64,
    pub nv_zero: f64,
}

/// PL⁻ = K_f⁻·p₂ and PL⁰ = K_f⁰·p₇, passed through the model's crosstalk.
pub fn pl_observables(p: &Populations, model: &KineticModel) -> PlObservables {
    let minus = model.internal.k_f_minus * p.get(Level::NvMinusExcited);
    let zero = model.internal.k_f_zero * p.get(Level::NvZeroExcited);
    let m = model.crosstalk.0;
    PlObservables {
        nv_minus: (m[0][0] * minus + m[0][1] * zero).max(0.0),
        nv_zero: (m[1][0] * minus + m[1][1] * zero).max(0.0),
    }
}
