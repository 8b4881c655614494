//! Energy thresholds for photoionization and recombination.
//!
//! Level energetics live in an [`EnergyLedger`] of intervals, so uncertain
//! entries (such as the ¹E–³A₂ splitting) propagate as bounds. From the ledger
//! we derive each charge-conversion threshold, the number of photons each
//! light source needs to cross it, and which processes the kinetic model
//! should include.
//!
//! Selection follows the observation that the IR response was qualitatively
//! the same at every IR wavelength used: a process driven by IR must need the
//! same, determinate photon order at each of them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::kinetics::Level;
use crate::units::PhotonEnergy;
use crate::{Error, Result};

/// A closed interval in eV. A missing end is unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Range {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Range {
    pub fn exact(v: f64) -> Self {
        Range { min: Some(v), max: Some(v) }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Range { min: Some(lo), max: Some(hi) }
    }

    pub fn upper(hi: f64) -> Self {
        Range { min: None, max: Some(hi) }
    }

    pub fn lower(lo: f64) -> Self {
        Range { min: Some(lo), max: None }
    }

    fn combine(a: Option<f64>, b: Option<f64>, f: impl Fn(f64, f64) -> f64) -> Option<f64> {
        Some(f(a?, b?))
    }

    pub fn add(self, o: Range) -> Range {
        Range {
            min: Self::combine(self.min, o.min, |a, b| a + b),
            max: Self::combine(self.max, o.max, |a, b| a + b),
        }
    }

    /// [a.min − b.max, a.max − b.min]
    pub fn sub(self, o: Range) -> Range {
        Range {
            min: Self::combine(self.min, o.max, |a, b| a - b),
            max: Self::combine(self.max, o.min, |a, b| a - b),
        }
    }

    /// Midpoint when both ends are known, else the known end.
    pub fn representative(&self) -> Option<f64> {
        match (self.min, self.max) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            (a, b) => a.or(b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.min, self.max].into_iter().flatten() {
            if !v.is_finite() {
                return Err(Error::domain("ledger bounds must be finite"));
            }
        }
        if let (Some(a), Some(b)) = (self.min, self.max) {
            if a > b {
                return Err(Error::domain(format!("interval lower bound {a} exceeds upper bound {b}")));
            }
        }
        if self.min.is_none() && self.max.is_none() {
            return Err(Error::domain("ledger entry needs at least one bound"));
        }
        Ok(())
    }
}

impl core::fmt::Display for Range {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match (self.min, self.max) {
            (Some(a), Some(b)) if a == b => write!(f, "{a:.3}"),
            (Some(a), Some(b)) => write!(f, "[{a:.3}, {b:.3}]"),
            (None, Some(b)) => write!(f, "< {b:.3}"),
            (Some(a), None) => write!(f, "> {a:.3}"),
            (None, None) => write!(f, "unbounded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LedgerEntry {
    pub value: Range,
    pub provenance: String,
}

impl LedgerEntry {
    fn new(value: Range, provenance: &str) -> Self {
        LedgerEntry {
            value,
            provenance: provenance.to_string(),
        }
    }
}

/// Level energetics, eV.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EnergyLedger {
    /// IP(³A₂→²E)
    pub ip_3a2_2e: LedgerEntry,
    /// NV⁻ zero-phonon line E(³E) − E(³A₂)
    pub e_zpl_minus: LedgerEntry,
    /// NV⁰ zero-phonon line E(²A₂) − E(²E)
    pub e_zpl_zero: LedgerEntry,
    /// Δ⁻ = E(¹E) − E(³A₂)
    pub delta_minus: LedgerEntry,
    /// Δ⁰ = E(⁴A₂) − E(²E)
    pub delta_zero: LedgerEntry,
    /// R(²A₂→¹E)
    pub r_2a2_1e: LedgerEntry,
    /// E(¹A₁) − E(¹E)
    pub singlet_gap: LedgerEntry,
}

impl Default for EnergyLedger {
    fn default() -> Self {
        EnergyLedger {
            ip_3a2_2e: LedgerEntry::new(Range::exact(2.65), "measured photoionization threshold (Aslam et al. 2013; Bourgeois et al. 2017)"),
            e_zpl_minus: LedgerEntry::new(Range::exact(1.946), "NV- zero-phonon line (Doherty et al. 2011)"),
            e_zpl_zero: LedgerEntry::new(Range::exact(2.16), "NV0 zero-phonon line (Doherty et al. 2013)"),
            delta_minus: LedgerEntry::new(
                Range::exact(0.38),
                "theoretical singlet offset (Bhandari et al. 2021); 0.21-0.35 eV measured by Blakley et al. 2024",
            ),
            delta_zero: LedgerEntry::new(
                Range::interval(0.58, 0.68),
                "theory gives 0.48-0.68 eV; two-photon 966 nm ionization of 3E raises the floor to 0.58 eV",
            ),
            r_2a2_1e: LedgerEntry::new(Range::upper(0.81), "one-photon 1524 nm recombination requires R < 0.81 eV"),
            singlet_gap: LedgerEntry::new(Range::exact(1.19), "E(1A1) - E(1E) singlet splitting"),
        }
    }
}

impl EnergyLedger {
    pub fn validate(&self) -> Result<()> {
        for (name, e) in self.entries() {
            e.value.validate().map_err(|err| Error::domain(format!("{name}: {err}")))?;
            if e.value.min.is_some_and(|v| v <= 0.0) || e.value.max.is_some_and(|v| v <= 0.0) {
                return Err(Error::domain(format!("{name}: energies must be positive")));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> [(&'static str, &LedgerEntry); 7] {
        [
            ("ip_3a2_2e", &self.ip_3a2_2e),
            ("e_zpl_minus", &self.e_zpl_minus),
            ("e_zpl_zero", &self.e_zpl_zero),
            ("delta_minus", &self.delta_minus),
            ("delta_zero", &self.delta_zero),
            ("r_2a2_1e", &self.r_2a2_1e),
            ("singlet_gap", &self.singlet_gap),
        ]
    }
}

/// Threshold keys produced by [`derived_thresholds`].
pub mod key {
    pub const IP_3A2_2E: &str = "IP(3A2->2E)";
    pub const IP_1E_2E: &str = "IP(1E->2E)";
    pub const IP_1A1_2E: &str = "IP(1A1->2E)";
    pub const IP_3E_2E: &str = "IP(3E->2E)";
    pub const IP_3E_2A2: &str = "IP(3E->2A2)";
    pub const IP_3E_4A2: &str = "IP(3E->4A2)";
    pub const R_2A2_1E: &str = "R(2A2->1E)";
    pub const R_2A2_1A1: &str = "R(2A2->1A1)";
    pub const R_2A2_3A2: &str = "R(2A2->3A2)";
    pub const R_4A2_3A2: &str = "R(4A2->3A2)";
}

/// Every ionization and recombination threshold implied by the ledger.
pub fn derived_thresholds(ledger: &EnergyLedger) -> BTreeMap<String, Range> {
    let ip = ledger.ip_3a2_2e.value;
    let zm = ledger.e_zpl_minus.value;
    let z0 = ledger.e_zpl_zero.value;
    let dm = ledger.delta_minus.value;
    let d0 = ledger.delta_zero.value;
    let r = ledger.r_2a2_1e.value;
    let gap = ledger.singlet_gap.value;
    let ip_3e_2e = ip.sub(zm);
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Range| {
        m.insert(k.to_string(), v);
    };
    put(key::IP_3A2_2E, ip);
    put(key::IP_1E_2E, ip.sub(dm));
    put(key::IP_1A1_2E, ip.sub(dm).sub(gap));
    put(key::IP_3E_2E, ip_3e_2e);
    put(key::IP_3E_2A2, ip_3e_2e.add(z0));
    put(key::IP_3E_4A2, ip_3e_2e.add(d0));
    put(key::R_2A2_1E, r);
    put(key::R_2A2_1A1, r.add(gap));
    put(key::R_2A2_3A2, r.sub(dm));
    put(key::R_4A2_3A2, r.sub(dm).add(z0).sub(d0));
    m
}

/// Smallest n with n·E_photon ≥ threshold. Exact ties (to 1e-12 relative)
/// count as reachable.
pub fn min_photons(threshold_ev: f64, photon: PhotonEnergy) -> u32 {
    let ratio = threshold_ev / photon.ev();
    if !(ratio > 1.0) {
        return 1;
    }
    let n = ratio.ceil();
    let n = if (n - 1.0) >= ratio * (1.0 - 1e-12) { n - 1.0 } else { n };
    n.max(1.0) as u32
}

/// Lower bound on Δ⁰ implied by IP(³E→⁴A₂) = IP(³E→²E) + Δ⁰ exceeding one
/// IR photon: Δ⁰ > ħω_IR − IP(³E→²E).
pub fn constrain_delta0(ledger: &EnergyLedger, ir_photon: PhotonEnergy) -> Result<f64> {
    ledger.validate()?;
    let ip_3e_2e = ledger.ip_3a2_2e.value.sub(ledger.e_zpl_minus.value);
    let upper = ip_3e_2e
        .max
        .ok_or_else(|| Error::domain("IP(3E->2E) has no upper bound"))?;
    Ok(ir_photon.ev() - upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    Ionization,
    Recombination,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Process {
    /// e.g. `K^i_25`
    pub name: String,
    pub direction: Direction,
    pub initial: Level,
    #[cfg_attr(feature = "serde", serde(rename = "final"))]
    pub final_level: Level,
    /// Key into [`derived_thresholds`].
    pub threshold: String,
    /// Excluded from the model regardless of energetics, with the reason.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub excluded: Option<String>,
}

/// The charge-conversion processes between the seven levels.
pub fn default_catalog() -> Vec<Process> {
    use Direction::*;
    use Level::*;
    let p = |name: &str, direction, initial, final_level, threshold: &str, excluded: Option<&str>| Process {
        name: name.to_string(),
        direction,
        initial,
        final_level,
        threshold: threshold.to_string(),
        excluded: excluded.map(str::to_string),
    };
    alloc::vec![
        p("K^i_16", Ionization, NvMinusGround, NvZeroGround, key::IP_3A2_2E, None),
        p("K^i_46", Ionization, SingletGround, NvZeroGround, key::IP_1E_2E, None),
        p(
            "K^i_36",
            Ionization,
            SingletExcited,
            NvZeroGround,
            key::IP_1A1_2E,
            Some("comparably large decay rate out of 1A1"),
        ),
        p("K^i_27", Ionization, NvMinusExcited, NvZeroExcited, key::IP_3E_2A2, None),
        p("K^i_25", Ionization, NvMinusExcited, Quartet, key::IP_3E_4A2, None),
        p("K^r_74", Recombination, NvZeroExcited, SingletGround, key::R_2A2_1E, None),
        p("K^r_73", Recombination, NvZeroExcited, SingletExcited, key::R_2A2_1A1, None),
        p(
            "K^r_71",
            Recombination,
            NvZeroExcited,
            NvMinusGround,
            key::R_2A2_3A2,
            Some("single-electron picture favours the singlets; including it does not change the fit"),
        ),
        p("K^r_51", Recombination, Quartet, NvMinusGround, key::R_4A2_3A2, None),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SourceRole {
    Green,
    Ir,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LightSource {
    pub label: String,
    pub photon: PhotonEnergy,
    pub role: SourceRole,
}

impl LightSource {
    pub fn from_wavelength(label: &str, wavelength: f64, role: SourceRole) -> Result<Self> {
        Ok(LightSource {
            label: label.to_string(),
            photon: PhotonEnergy::from_wavelength(wavelength)?,
            role,
        })
    }
}

/// Photon orders a source may need, given the threshold bounds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceOrder {
    pub label: String,
    pub role: SourceRole,
    pub min: u32,
    /// `None` when the threshold has no upper bound.
    pub max: Option<u32>,
}

impl SourceOrder {
    fn determinate(&self) -> Option<u32> {
        self.max.filter(|&m| m == self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "status", rename_all = "snake_case"))]
pub enum Status {
    Active {
        /// Common IR photon order, when the IR route is open.
        ir_order: Option<u32>,
        /// Green photon order, when the green route is open.
        green_order: Option<u32>,
    },
    Rejected {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Verdict {
    pub process: Process,
    pub threshold: Range,
    pub orders: Vec<SourceOrder>,
    pub status: Status,
}

impl Verdict {
    pub fn is_active(&self) -> bool {
        matches!(self.status, Status::Active { .. })
    }
}

fn upper_or_lower(r: &Range) -> f64 {
    r.max.or(r.min).unwrap_or(f64::INFINITY)
}

/// Classifies every catalog process as active or rejected.
///
/// * IR route: every IR source needs one determinate order, the same for
///   all of them, and no larger than `max_order`.
/// * Green route: exactly one green photon suffices (and `max_order ≥ 1`).
/// * Ionization is active when the IR route is open.
/// * Recombination is active when the IR route is open, or when the green
///   route is open and the process is the lowest-threshold recombination out
///   of its initial level.
///
/// The result is sorted by process name, independent of input order.
pub fn select_processes(
    catalog: &[Process],
    ledger: &EnergyLedger,
    sources: &[LightSource],
    max_order: u32,
) -> Result<Vec<Verdict>> {
    if sources.is_empty() {
        return Err(Error::invalid("at least one light source is required"));
    }
    ledger.validate()?;
    let thresholds = derived_thresholds(ledger);
    let mut sorted_sources = sources.to_vec();
    sorted_sources.sort_by(|a, b| (a.role, a.photon.ev(), &a.label).partial_cmp(&(b.role, b.photon.ev(), &b.label)).unwrap_or(core::cmp::Ordering::Equal));

    let threshold_of = |p: &Process| -> Result<Range> {
        thresholds
            .get(&p.threshold)
            .copied()
            .ok_or_else(|| Error::Configuration(format!("{}: unknown threshold '{}'", p.name, p.threshold)))
    };

    // lowest non-excluded recombination threshold per initial level
    let mut lowest: BTreeMap<Level, f64> = BTreeMap::new();
    for p in catalog.iter().filter(|p| p.direction == Direction::Recombination && p.excluded.is_none()) {
        let t = upper_or_lower(&threshold_of(p)?);
        let e = lowest.entry(p.initial).or_insert(f64::INFINITY);
        *e = e.min(t);
    }

    let mut verdicts = Vec::with_capacity(catalog.len());
    for p in catalog {
        let threshold = threshold_of(p)?;
        let orders: Vec<SourceOrder> = sorted_sources
            .iter()
            .map(|s| SourceOrder {
                label: s.label.clone(),
                role: s.role,
                min: threshold.min.map_or(1, |t| min_photons(t, s.photon)),
                max: threshold.max.map(|t| min_photons(t, s.photon)),
            })
            .collect();

        let ir: Vec<&SourceOrder> = orders.iter().filter(|o| o.role == SourceRole::Ir).collect();
        let ir_determinate: Vec<Option<u32>> = ir.iter().map(|o| o.determinate()).collect();
        let ir_problem = if ir.is_empty() {
            Some("no IR source".to_string())
        } else if ir_determinate.iter().any(Option::is_none) {
            Some("IR order not fixed by the ledger bounds".to_string())
        } else {
            let vals: Vec<u32> = ir_determinate.iter().flatten().copied().collect();
            let too_high = vals.iter().any(|&v| v > max_order);
            let mismatched = vals.windows(2).any(|w| w[0] != w[1]);
            match (too_high, mismatched) {
                (true, true) => Some(format!("order > {max_order} and mismatched")),
                (true, false) => Some(format!("order > {max_order}")),
                (false, true) => Some("IR orders mismatched".to_string()),
                (false, false) => None,
            }
        };
        let ir_order = match ir_problem {
            None => ir_determinate[0],
            Some(_) => None,
        };
        let green_order = orders
            .iter()
            .filter(|o| o.role == SourceRole::Green)
            .filter_map(|o| o.determinate())
            .find(|&n| n == 1 && n <= max_order);

        let status = if let Some(reason) = &p.excluded {
            Status::Rejected { reason: reason.clone() }
        } else {
            match p.direction {
                Direction::Ionization => match ir_order {
                    Some(_) => Status::Active { ir_order, green_order },
                    None => Status::Rejected {
                        reason: ir_problem.unwrap_or_default(),
                    },
                },
                Direction::Recombination => {
                    let is_lowest = lowest.get(&p.initial).is_some_and(|&t| upper_or_lower(&threshold) <= t);
                    if ir_order.is_some() {
                        Status::Active { ir_order, green_order }
                    } else if green_order.is_some() && is_lowest {
                        Status::Active { ir_order: None, green_order }
                    } else if green_order.is_some() {
                        Status::Rejected {
                            reason: format!(
                                "{}; green-only and not the lowest-threshold channel from {}",
                                ir_problem.unwrap_or_default(),
                                p.initial.name()
                            ),
                        }
                    } else {
                        Status::Rejected {
                            reason: ir_problem.unwrap_or_default(),
                        }
                    }
                }
            }
        };
        verdicts.push(Verdict {
            process: p.clone(),
            threshold,
            orders,
            status,
        });
    }
    verdicts.sort_by(|a, b| a.process.name.cmp(&b.process.name));
    Ok(verdicts)
}

/// Names of the active processes, sorted.
pub fn active_names(verdicts: &[Verdict]) -> Vec<String> {
    verdicts.iter().filter(|v| v.is_active()).map(|v| v.process.name.clone()).collect()
}
