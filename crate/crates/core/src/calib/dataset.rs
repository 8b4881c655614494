use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cavity::{photons, CavityMode, DetuningScan};
use crate::kinetics::{pl_sweep, RateCoefficients};
use crate::units::PhotonEnergy;
use crate::{Error, Result};

/// Fiber-to-cavity taper efficiency in the 1520 nm band.
pub const TAPER_EFFICIENCY_1520: f64 = 0.44;
/// Fiber-to-cavity taper efficiency in the 980 nm band.
pub const TAPER_EFFICIENCY_980: f64 = 0.52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Channel {
    #[cfg_attr(feature = "serde", serde(rename = "NV-"))]
    NvMinus,
    #[cfg_attr(feature = "serde", serde(rename = "NV0"))]
    NvZero,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::NvMinus => "NV-",
            Channel::NvZero => "NV0",
        }
    }

    pub fn from_name(s: &str) -> Option<Channel> {
        match s {
            "NV-" | "nv-" | "NVm" | "minus" => Some(Channel::NvMinus),
            "NV0" | "nv0" | "zero" => Some(Channel::NvZero),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DataPoint {
    pub n_ir: f64,
    pub pl_norm: f64,
    pub channel: Channel,
}

/// Normalized PL against IR photon number at one green power.
///
/// Points are ordered by channel (NV⁻ first) and then by strictly
/// increasing `n_ir` within a channel.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompiledDataset {
    pub ir_label: String,
    /// mW
    pub green_power: f64,
    pub points: Vec<DataPoint>,
    pub background_fraction: f64,
}

impl CompiledDataset {
    /// Builds a dataset from arbitrary points: sorts them and averages
    /// repeated photon numbers.
    pub fn from_points(ir_label: &str, green_power: f64, points: Vec<DataPoint>, background_fraction: f64) -> Result<Self> {
        let ds = CompiledDataset {
            ir_label: ir_label.to_string(),
            green_power,
            points: merge_points(points),
            background_fraction,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ir_label.is_empty() {
            return Err(Error::invalid("dataset IR label is empty"));
        }
        if !(self.green_power >= 0.0) || !self.green_power.is_finite() {
            return Err(Error::domain(format!("green power must be >= 0 mW, got {}", self.green_power)));
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return Err(Error::domain(format!("background fraction must be in [0, 1), got {}", self.background_fraction)));
        }
        if self.points.is_empty() {
            return Err(Error::invalid("dataset has no points"));
        }
        for p in &self.points {
            if !(p.n_ir >= 0.0) || !p.n_ir.is_finite() || !p.pl_norm.is_finite() {
                return Err(Error::invalid(format!("invalid data point n_ir={} pl_norm={}", p.n_ir, p.pl_norm)));
            }
        }
        for w in self.points.windows(2) {
            if w[0].channel == w[1].channel && !(w[1].n_ir > w[0].n_ir) {
                return Err(Error::invalid("photon numbers must be strictly increasing within a channel"));
            }
            if w[0].channel > w[1].channel {
                return Err(Error::invalid("points must be grouped by channel"));
            }
        }
        Ok(())
    }

    pub fn channel(&self, c: Channel) -> impl Iterator<Item = &DataPoint> {
        self.points.iter().filter(move |p| p.channel == c)
    }
}

/// Sorts by (channel, n_ir) and averages points with identical photon number.
/// Values are summed in sorted order, so the result does not depend on the
/// input order.
fn merge_points(mut points: Vec<DataPoint>) -> Vec<DataPoint> {
    points.sort_by(|a, b| {
        a.channel
            .cmp(&b.channel)
            .then(a.n_ir.total_cmp(&b.n_ir))
            .then(a.pl_norm.total_cmp(&b.pl_norm))
    });
    let mut out: Vec<DataPoint> = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        let mut j = i + 1;
        while j < points.len() && points[j].channel == points[i].channel && points[j].n_ir == points[i].n_ir {
            j += 1;
        }
        let sum: f64 = points[i..j].iter().map(|p| p.pl_norm).sum();
        out.push(DataPoint {
            pl_norm: sum / (j - i) as f64,
            ..points[i]
        });
        i = j;
    }
    out
}

/// `(raw/reference − b)/(1 − b)`: removes a fraction `b` of the no-IR signal
/// that comes from emitters outside the cavity mode and so never responds
/// to IR. The background fraction is an estimate supplied by the user.
pub fn normalize_and_correct(raw: f64, reference: f64, background_fraction: f64) -> Result<f64> {
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(Error::domain(format!("reference PL must be > 0, got {reference}")));
    }
    if !(0.0..1.0).contains(&background_fraction) {
        return Err(Error::domain(format!("background fraction must be in [0, 1), got {background_fraction}")));
    }
    if !raw.is_finite() {
        return Err(Error::domain("raw PL is not finite"));
    }
    Ok((raw / reference - background_fraction) / (1.0 - background_fraction))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileOptions {
    pub ir_label: String,
    /// mW
    pub green_power: f64,
    pub taper_efficiency: f64,
    pub background_fraction: f64,
}

/// Converts scans with PL traces into normalized PL against photon number.
///
/// Each sample's photon number comes from the fitted mode at that laser
/// wavelength, using the scan's launched power times the taper efficiency.
/// Scans with an explicit no-IR reference normalize against it; the others
/// share the sample with the smallest photon number among them.
pub fn compile_dataset(scans: &[DetuningScan], mode: &CavityMode, opts: &CompileOptions) -> Result<CompiledDataset> {
    mode.validate()?;
    if !(opts.taper_efficiency > 0.0 && opts.taper_efficiency <= 1.0) {
        return Err(Error::domain(format!("taper efficiency must be in (0, 1], got {}", opts.taper_efficiency)));
    }
    if scans.is_empty() {
        return Err(Error::invalid("no scans to compile"));
    }
    struct Sample {
        n: f64,
        nv_minus: f64,
        nv_zero: f64,
        reference: Option<(f64, f64)>,
    }
    let mut samples = Vec::new();
    for (k, scan) in scans.iter().enumerate() {
        scan.validate()?;
        let lo = scan.wavelengths[0];
        let hi = scan.wavelengths[scan.wavelengths.len() - 1];
        if !(lo <= mode.resonance_wavelength && mode.resonance_wavelength <= hi) {
            return Err(Error::Coverage(format!(
                "scan {k} spans {:.4}-{:.4} nm but the resonance is at {:.4} nm",
                lo * 1e9,
                hi * 1e9,
                mode.resonance_wavelength * 1e9
            )));
        }
        let pl = scan
            .pl
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("scan {k} has no PL traces")))?;
        let power = scan.input_power * opts.taper_efficiency;
        for (i, &l) in scan.wavelengths.iter().enumerate() {
            let n = photons(mode, mode.detuning_at(l), power, PhotonEnergy::from_wavelength(l)?);
            samples.push(Sample {
                n,
                nv_minus: pl.nv_minus[i],
                nv_zero: pl.nv_zero[i],
                reference: pl.reference,
            });
        }
    }
    let shared = samples
        .iter()
        .filter(|s| s.reference.is_none())
        .min_by(|a, b| a.n.total_cmp(&b.n).then(a.nv_minus.total_cmp(&b.nv_minus)).then(a.nv_zero.total_cmp(&b.nv_zero)))
        .map(|s| (s.nv_zero, s.nv_minus));
    let b = opts.background_fraction;
    let mut points = Vec::with_capacity(2 * samples.len());
    for s in &samples {
        let (r0, rm) = s.reference.or(shared).unwrap_or((0.0, 0.0));
        points.push(DataPoint {
            n_ir: s.n,
            pl_norm: normalize_and_correct(s.nv_minus, rm, b)?,
            channel: Channel::NvMinus,
        });
        points.push(DataPoint {
            n_ir: s.n,
            pl_norm: normalize_and_correct(s.nv_zero, r0, b)?,
            channel: Channel::NvZero,
        });
    }
    CompiledDataset::from_points(&opts.ir_label, opts.green_power, points, b)
}

/// Noise applied to synthetic PL.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum NoiseModel {
    #[default]
    None,
    /// pl·(1 + σ·ξ), ξ standard normal.
    Multiplicative { sigma: f64, seed: u64 },
}

/// Normalized PL of both channels computed from the steady state, with
/// optional seeded noise. The same seed always yields the same dataset.
pub fn synth_dataset(
    coeffs: &RateCoefficients,
    green_power: f64,
    ir_label: &str,
    n_grid: &[f64],
    noise: NoiseModel,
) -> Result<CompiledDataset> {
    if n_grid.is_empty() {
        return Err(Error::invalid("photon-number grid is empty"));
    }
    let model = coeffs.model(ir_label)?;
    let sweep = pl_sweep(&model, green_power, n_grid)?;
    let mut points: Vec<DataPoint> = Vec::with_capacity(2 * sweep.len());
    for channel in [Channel::NvMinus, Channel::NvZero] {
        for s in &sweep {
            let pl_norm = match channel {
                Channel::NvMinus => s.pl_nvm_norm,
                Channel::NvZero => s.pl_nv0_norm,
            };
            points.push(DataPoint {
                n_ir: s.n_ir,
                pl_norm,
                channel,
            });
        }
    }
    if let NoiseModel::Multiplicative { sigma, seed } = noise {
        let normal = Normal::new(0.0, sigma).map_err(|_| Error::domain(format!("noise sigma must be >= 0, got {sigma}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut points {
            p.pl_norm *= 1.0 + normal.sample(&mut rng);
        }
    }
    CompiledDataset::from_points(ir_label, green_power, points, 0.0)
}
