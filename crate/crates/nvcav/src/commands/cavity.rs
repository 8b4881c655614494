use std::path::{Path, PathBuf};

use clap::Args;

use nvcav_core::calib::{compile_dataset, CompileOptions};
use nvcav_core::cavity::{fit_lineshape, mode_volume_from_cubic_wavelengths, photons as photon_number, FitModel, LineshapeFitOptions};
use nvcav_core::units::{PhotonEnergy, DIAMOND_REFRACTIVE_INDEX};
use nvcav_core::Error as CoreError;

use super::{display, ModelArg};
use crate::error::{CliError, Context, Result};
use crate::formats::{self, ModeFile, ScanMeta};
use crate::provenance::{num, to_json, Output, Provenance};

#[derive(Debug, Clone, Args)]
pub struct CavityFitArgs {
    /// Scan CSV: wavelength_nm,transmission[,pl_nv0,pl_nvm].
    pub scan: PathBuf,
    #[arg(long, value_enum, default_value = "singlet")]
    pub model: ModelArg,
    /// Scan metadata JSON; `<scan>.json` is used when present.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Mode label; the scan's file stem by default.
    #[arg(long)]
    pub label: Option<String>,
    /// Mode volume in units of (λ/n)³.
    #[arg(long, conflicts_with = "mode_volume")]
    pub mode_volume_cubic: Option<f64>,
    /// Mode volume, m³.
    #[arg(long)]
    pub mode_volume: Option<f64>,
    /// Refractive index n in (λ/n)³.
    #[arg(long, default_value_t = DIAMOND_REFRACTIVE_INDEX)]
    pub refractive_index: f64,
    #[arg(long)]
    pub group_index: f64,
    /// Smallest transmission contrast accepted as a resonance.
    #[arg(long, default_value_t = 0.05)]
    pub contrast_floor: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn cavity_fit(a: &CavityFitArgs) -> Result<()> {
    let mut prov = Provenance::new("cavity-fit");
    let (scan, _) = read_scan_with_meta(&a.scan, a.meta.as_ref(), false, &mut prov)?;
    let model = match a.model {
        ModelArg::Singlet => FitModel::Singlet,
        ModelArg::Doublet => FitModel::Doublet,
        ModelArg::TwoLorentzian => FitModel::TwoLorentzian,
    };
    let volume_given = a.mode_volume.or(a.mode_volume_cubic).ok_or_else(|| {
        CliError::input("give the mode volume with --mode-volume (m³) or --mode-volume-cubic ((λ/n)³)")
    })?;
    let label = a
        .label
        .clone()
        .unwrap_or_else(|| a.scan.file_stem().map_or("mode".into(), |s| s.to_string_lossy().into_owned()));
    let opts = LineshapeFitOptions {
        contrast_floor: a.contrast_floor,
        mode_volume: if a.mode_volume.is_some() { volume_given } else { 1.0 },
        group_index: a.group_index,
        label,
        ..LineshapeFitOptions::default()
    };
    let mut fit = match fit_lineshape(&scan, model, &opts) {
        Ok(f) => f,
        Err(CoreError::FitNonConvergence { iterations, best }) => {
            return Err(CliError::nonconvergence(format!(
                "lineshape fit did not converge after {iterations} iterations (best rms {:e})",
                best.rms
            )))
        }
        Err(e @ CoreError::NoResonance { .. }) => return Err(CliError::degenerate(format!("no resonance: {e}"))),
        Err(e) => return Err(e).context(display(&a.scan)),
    };
    if a.mode_volume.is_none() {
        fit.mode.mode_volume =
            mode_volume_from_cubic_wavelengths(volume_given, fit.mode.resonance_wavelength, a.refractive_index);
    }
    fit.mode.validate()?;
    Output(a.output.clone()).write(&to_json(&ModeFile::new(&fit, prov))?)
}

/// Reads a scan and its metadata. The sidecar `<scan>.json` is picked up
/// when present; `need_meta` makes it mandatory.
fn read_scan_with_meta(
    scan: &Path,
    meta: Option<&PathBuf>,
    need_meta: bool,
    prov: &mut Provenance,
) -> Result<(nvcav_core::cavity::DetuningScan, Option<ScanMeta>)> {
    let text = prov.read(scan)?;
    let meta_path = meta.cloned().or_else(|| {
        let p = formats::sidecar_path(scan);
        p.is_file().then_some(p)
    });
    let meta = match meta_path {
        Some(p) => {
            let t = prov.read(&p)?;
            Some(serde_json::from_str::<ScanMeta>(&t).context(display(&p))?)
        }
        None if need_meta => {
            return Err(CliError::input(format!(
                "{}: metadata {} with input_power_mW and taper_transmission_efficiency is required",
                display(scan),
                display(&formats::sidecar_path(scan))
            )))
        }
        None => None,
    };
    Ok((formats::read_scan(&text, meta.as_ref(), &display(scan))?, meta))
}

#[derive(Debug, Clone, Args)]
pub struct PhotonsArgs {
    /// Cavity mode JSON.
    pub mode: PathBuf,
    /// Power at the taper coupling region, W.
    #[arg(long)]
    pub power: f64,
    /// Detuning Δ = ω_cav − ω, rad/s.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub detuning: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn photons(a: &PhotonsArgs) -> Result<()> {
    let mut prov = Provenance::new("photons");
    let text = prov.read(&a.mode)?;
    let mode = formats::read_mode(&text, &display(&a.mode))?;
    if !(a.power >= 0.0) || !a.power.is_finite() {
        return Err(CliError::input(format!("power must be finite and >= 0, got {}", a.power)));
    }
    let energy = PhotonEnergy::from_angular_frequency(mode.resonance_frequency() - a.detuning)
        .context("laser frequency ω_cav − Δ")?;
    let n = photon_number(&mode, a.detuning, a.power, energy);
    let body = formats::write_table(
        &prov,
        &["power_W", "detuning_rad_s", "n_photons"],
        &[vec![num(a.power), num(a.detuning), num(n)]],
    )?;
    Output(a.output.clone()).write(&body)
}

#[derive(Debug, Clone, Args)]
pub struct CompileArgs {
    /// Scan CSVs with PL columns, each with a `<scan>.json` sidecar.
    #[arg(required = true)]
    pub scans: Vec<PathBuf>,
    /// Fitted cavity mode JSON.
    #[arg(long)]
    pub mode: PathBuf,
    #[arg(long)]
    pub ir_label: String,
    /// Green power, mW.
    #[arg(long = "green-power-mW")]
    pub green_power_mw: f64,
    /// Share of the no-IR PL from emitters outside the mode.
    #[arg(long, default_value_t = 0.0)]
    pub background_fraction: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn compile(a: &CompileArgs) -> Result<()> {
    let mut prov = Provenance::new("compile");
    let text = prov.read(&a.mode)?;
    let mode = formats::read_mode(&text, &display(&a.mode))?;
    let mut scans = Vec::with_capacity(a.scans.len());
    for s in &a.scans {
        let (mut scan, meta) = read_scan_with_meta(s, None, true, &mut prov)?;
        // each scan carries its own taper efficiency, so fold it into the power
        scan.input_power *= meta.expect("metadata is mandatory here").taper_transmission_efficiency;
        scans.push(scan);
    }
    let opts = CompileOptions {
        ir_label: a.ir_label.clone(),
        green_power: a.green_power_mw,
        taper_efficiency: 1.0,
        background_fraction: a.background_fraction,
    };
    let set = compile_dataset(&scans, &mode, &opts)?;
    Output(a.output.clone()).write(&formats::write_datasets(&prov, &[set])?)
}
