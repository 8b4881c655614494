use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use nvcav_core::interaction::{confinement_factor, cross_section_from_rate, median, mode_volume, GaussianRing, RingGridSpec};

use super::display;
use crate::error::{CliError, Context, Result};
use crate::formats;
use crate::provenance::{num, to_json, Output, Provenance};

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Window bounds, m.
    #[arg(long, allow_negative_numbers = true)]
    pub r_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub r_max: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub z_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub z_max: f64,
    /// Coarse cell edge, m.
    #[arg(long)]
    pub cell: f64,
    /// Split each coarse cell refine×refine.
    #[arg(long, default_value_t = 1)]
    pub refine: usize,
    /// IR ring center and widths, m.
    #[arg(long)]
    pub ir_r0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub ir_z0: f64,
    #[arg(long)]
    pub ir_sigma_r: f64,
    #[arg(long)]
    pub ir_sigma_z: f64,
    /// NV collection-mode center and widths, m.
    #[arg(long)]
    pub nv_r0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub nv_z0: f64,
    #[arg(long)]
    pub nv_sigma_r: f64,
    #[arg(long)]
    pub nv_sigma_z: f64,
    /// Excitation cylinder r_lo,r_hi,z_lo,z_hi, m.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub excitation: Vec<f64>,
    /// Dielectric constant, F/m.
    #[arg(long, default_value_t = 5.1e-11)]
    pub eps: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn grid(a: &GridArgs) -> Result<()> {
    let prov = Provenance::new("grid");
    let ex: [f64; 4] = a
        .excitation
        .as_slice()
        .try_into()
        .map_err(|_| CliError::input("--excitation takes four values r_lo,r_hi,z_lo,z_hi"))?;
    let spec = RingGridSpec {
        r_min: a.r_min,
        r_max: a.r_max,
        z_min: a.z_min,
        z_max: a.z_max,
        cell: a.cell,
        ir: GaussianRing { r0: a.ir_r0, z0: a.ir_z0, sigma_r: a.ir_sigma_r, sigma_z: a.ir_sigma_z },
        nv: GaussianRing { r0: a.nv_r0, z0: a.nv_z0, sigma_r: a.nv_sigma_r, sigma_z: a.nv_sigma_z },
        excitation: ex,
        eps: a.eps,
    };
    let g = spec.build(a.refine)?;
    Output(a.output.clone()).write(&formats::write_grid(&prov, &g)?)
}

#[derive(Debug, Clone, Args)]
pub struct GammaArgs {
    /// Field grid CSV.
    pub grid: PathBuf,
    /// Photon order.
    #[arg(long, default_value_t = 1)]
    pub p: u32,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn gamma(a: &GammaArgs) -> Result<()> {
    let mut prov = Provenance::new("gamma");
    let text = prov.read(&a.grid)?;
    let g = formats::read_grid(&text, &display(&a.grid))?;
    let gamma = confinement_factor(&g, a.p)?;
    let v = mode_volume(&g)?;
    let body = formats::write_table(&prov, &["p", "gamma", "mode_volume_m3"], &[vec![a.p.to_string(), num(gamma), num(v)]])?;
    Output(a.output.clone()).write(&body)
}

/// A confinement factor given directly or as samples whose median is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaValue {
    One(f64),
    Samples(Vec<f64>),
}

impl GammaValue {
    fn value(&self) -> Result<f64> {
        match self {
            GammaValue::One(v) => Ok(*v),
            GammaValue::Samples(v) => Ok(median(v)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaFile {
    pub gamma_1: GammaValue,
    pub gamma_2: GammaValue,
}

#[derive(Debug, Clone, Args)]
pub struct XsectionArgs {
    /// Coefficient JSON (plain or a `fit` output).
    pub coefficients: PathBuf,
    /// Cavity mode JSON of the IR resonance.
    pub mode: PathBuf,
    /// `{"gamma_1": .., "gamma_2": ..}`, each a number or a list of samples.
    pub gamma: PathBuf,
    /// IR label in the coefficient file. Inferred when the file has one
    /// label, or from the mode label or wavelength.
    #[arg(long)]
    pub ir_label: Option<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SigmaEntry {
    coefficient: &'static str,
    rate_coefficient: f64,
    order: u32,
    gamma: f64,
    value: f64,
    unit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SigmaFile {
    ir_label: String,
    mode: String,
    sigma_1: SigmaEntry,
    sigma_2: SigmaEntry,
    provenance: Provenance,
}

pub fn xsection(a: &XsectionArgs) -> Result<()> {
    let mut prov = Provenance::new("xsection");
    let text = prov.read(&a.coefficients)?;
    let coeffs = formats::read_coefficients(&text, &display(&a.coefficients))?;
    let text = prov.read(&a.mode)?;
    let mode = formats::read_mode(&text, &display(&a.mode))?;
    let text = prov.read(&a.gamma)?;
    let gf: GammaFile = serde_json::from_str(&text).context(display(&a.gamma))?;

    let by_wavelength = format!("{}nm", (mode.resonance_wavelength * 1e9).round());
    let label = match &a.ir_label {
        Some(l) => l.clone(),
        None if coeffs.ir_per_photon.len() == 1 => coeffs.ir_per_photon.keys().next().unwrap().clone(),
        None if coeffs.ir_per_photon.contains_key(&mode.label) => mode.label.clone(),
        None if coeffs.ir_per_photon.contains_key(&by_wavelength) => by_wavelength,
        None => return Err(CliError::input("cannot tell which IR label to use; pass --ir-label")),
    };
    let ir = coeffs
        .ir_per_photon
        .get(&label)
        .ok_or_else(|| CliError::input(format!("no IR coefficients for '{label}'")))?;
    let entry = |coefficient: &'static str, k: f64, order: u32, gamma: f64| -> Result<SigmaEntry> {
        let s = cross_section_from_rate(k, order, &mode, gamma)?;
        Ok(SigmaEntry { coefficient, rate_coefficient: k, order, gamma, value: s.value, unit: s.unit() })
    };
    let out = SigmaFile {
        sigma_1: entry("K^r_74,1-IR", ir.k_74_1ir, 1, gf.gamma_1.value()?)?,
        sigma_2: entry("K^i_25,2-IR", ir.k_25_2ir, 2, gf.gamma_2.value()?)?,
        ir_label: label,
        mode: mode.label.clone(),
        provenance: prov,
    };
    Output(a.output.clone()).write(&to_json(&out)?)
}
