use std::path::PathBuf;

use clap::Args;

use nvcav_core::calib::{joint_fit, synth_dataset, FitOptions, NoiseModel};
use nvcav_core::kinetics::published_fit;

use super::{coefficients, display, load_config, load_optional_config, output, ConfigArgs};
use crate::config::{FitConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, FitFile};
use crate::provenance::{to_json, Output, Provenance};

pub fn synth(a: &ConfigArgs) -> Result<()> {
    let mut prov = Provenance::new("synth");
    let cfg = load_config(a.config.as_deref(), &mut prov)?;
    let s = cfg.section(&cfg.synth, "synth")?;
    let coeffs = coefficients(&cfg, &mut prov)?;
    let grid = s.n_ir.values()?;
    if !(s.noise_sigma >= 0.0) {
        return Err(CliError::input("noise_sigma must be >= 0"));
    }
    let mut sets = Vec::with_capacity(s.green_power_mW.len());
    for (i, &pg) in s.green_power_mW.iter().enumerate() {
        let noise = if s.noise_sigma > 0.0 {
            NoiseModel::Multiplicative { sigma: s.noise_sigma, seed: cfg.seed.wrapping_add(i as u64) }
        } else {
            NoiseModel::None
        };
        sets.push(synth_dataset(&coeffs, pg, &s.ir_label, &grid, noise)?);
    }
    output(&a.output, &s.output).write(&formats::write_datasets(&prov, &sets)?)
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Compiled dataset CSVs (added to those listed in the config).
    pub datasets: Vec<PathBuf>,
    /// Run configuration with an optional [fit] section and initial
    /// coefficients. Defaults to $NVCAV_CONFIG, then ./nvcav.toml if present.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let mut prov = Provenance::new("fit");
    let cfg = load_optional_config(a.config.as_deref(), &mut prov)?;
    let cfg = cfg.unwrap_or_else(|| {
        prov.seed = Some(0);
        RunConfig::default()
    });
    let fc = cfg.fit.clone().unwrap_or(FitConfig {
        datasets: Vec::new(),
        free: None,
        loss: Default::default(),
        weights: None,
        restarts: 0,
        restart_spread_decades: 0.5,
        output: None,
    });
    let initial = match &cfg.coefficients {
        Some(_) => coefficients(&cfg, &mut prov)?,
        None => published_fit(),
    };
    let paths: Vec<PathBuf> = fc.datasets.iter().chain(&a.datasets).cloned().collect();
    if paths.is_empty() {
        return Err(CliError::input("no datasets given"));
    }
    let mut sets = Vec::new();
    for p in &paths {
        let text = prov.read(p)?;
        sets.extend(formats::read_datasets(&text, &display(p))?);
    }
    let free = fc
        .free
        .as_ref()
        .map(|v| v.iter().map(|s| formats::parse_parameter(s)).collect::<Result<Vec<_>>>())
        .transpose()?;
    let opts = FitOptions {
        loss: fc.loss,
        free,
        weights: fc.weights.clone(),
        restarts: fc.restarts,
        restart_spread_decades: fc.restart_spread_decades,
        seed: cfg.seed,
        ..FitOptions::default()
    };
    let r = joint_fit(&sets, &initial, &opts)?;
    let options = serde_json::json!({
        "datasets": paths.iter().map(|p| display(p)).collect::<Vec<_>>(),
        "free": fc.free,
        "loss": fc.loss,
        "weights": fc.weights,
        "restarts": fc.restarts,
        "restart_spread_decades": fc.restart_spread_decades,
        "seed": cfg.seed,
    });
    let converged = r.converged;
    let diagnostic = r.diagnostic.clone();
    let doc = FitFile::new(&r, options, prov)?;
    Output(a.output.clone().or(fc.output)).write(&to_json(&doc)?)?;
    if !converged {
        return Err(CliError::nonconvergence(format!(
            "fit did not converge: {}",
            diagnostic.unwrap_or_else(|| format!("{:?}", r.termination))
        )));
    }
    Ok(())
}
