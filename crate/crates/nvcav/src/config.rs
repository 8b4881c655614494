//! The run configuration document (TOML).
//!
//! One file binds the coefficient and ledger files, photon-number and
//! modulation grids, output paths and the seed for every config-driven
//! subcommand. Relative paths resolve against the file's directory. Unknown
//! keys are rejected, and every input path must exist when the file is
//! loaded.
//!
//! ```toml
//! seed = 7
//! coefficients = "fit.json"        # published coefficients when absent
//!
//! [sweep]
//! ir_label = "966nm"
//! green_power_mW = 4.6
//! n_ir = { log10_min = 0.0, log10_max = 5.0, points = 501 }
//! output = "sweep.csv"
//! ```
//!
//! The config path comes from `--config`, else `NVCAV_CONFIG`, else
//! `nvcav.toml` in the working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::provenance::Provenance;

pub const CONFIG_ENV: &str = "NVCAV_CONFIG";
pub const DEFAULT_CONFIG: &str = "nvcav.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Coefficient file (plain or a `fit` output).
    pub coefficients: Option<PathBuf>,
    /// Energy ledger file for `thresholds`.
    pub ledger: Option<PathBuf>,
    pub sweep: Option<SweepConfig>,
    pub timedomain: Option<TimeDomainConfig>,
    pub contrast: Option<ContrastConfig>,
    pub synth: Option<SynthConfig>,
    pub fit: Option<FitConfig>,
}

/// Either explicit values or a log-spaced grid `10^(log10_min..=log10_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Grid {
    Values { values: Vec<f64> },
    Log { log10_min: f64, log10_max: f64, points: usize },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Values { values } => values.clone(),
            Grid::Log { log10_min, log10_max, points } => match points {
                0 => Vec::new(),
                1 => vec![10f64.powf(*log10_min)],
                n => (0..*n)
                    .map(|i| 10f64.powf(log10_min + (log10_max - log10_min) * i as f64 / (n - 1) as f64))
                    .collect(),
            },
        };
        if v.is_empty() {
            return Err(CliError::input("grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::input("grid contains non-finite values"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SweepConfig {
    pub ir_label: String,
    pub green_power_mW: f64,
    pub n_ir: Grid,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct TimeDomainConfig {
    pub ir_label: String,
    pub green_power_mW: f64,
    /// Photon number in the high half of the square wave.
    pub n_high: f64,
    pub extinction_dB: f64,
    pub eom_frequency_Hz: f64,
    #[serde(default = "half")]
    pub duty: f64,
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default = "default_samples")]
    pub samples_per_period: usize,
    /// Largest relative period-to-period PL change counted as settled.
    #[serde(default = "default_settle")]
    pub settle_tol: f64,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ContrastConfig {
    pub ir_label: String,
    pub green_power_mW: f64,
    pub n_high: f64,
    pub extinction_dB: f64,
    pub eom_frequency_Hz: Grid,
    #[serde(default = "half")]
    pub duty: f64,
    #[serde(default = "default_samples")]
    pub samples_per_period: usize,
    #[serde(default = "default_settle")]
    pub settle_tol: f64,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SynthConfig {
    pub ir_label: String,
    pub green_power_mW: Vec<f64>,
    pub n_ir: Grid,
    /// Multiplicative Gaussian noise level; 0 for exact data.
    #[serde(default)]
    pub noise_sigma: f64,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Dataset CSVs, in addition to any given on the command line.
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    /// Free coefficients, e.g. `"K_56"` or `"K^i_25,2-IR [966nm]"`. All
    /// fittable coefficients of the datasets' labels when absent.
    pub free: Option<Vec<String>>,
    #[serde(default)]
    pub loss: nvcav_core::calib::Loss,
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub restarts: usize,
    #[serde(default = "default_spread")]
    pub restart_spread_decades: f64,
    pub output: Option<PathBuf>,
}

fn half() -> f64 {
    0.5
}
fn default_periods() -> usize {
    5
}
fn default_samples() -> usize {
    400
}
fn default_settle() -> f64 {
    1e-6
}
fn default_spread() -> f64 {
    0.5
}

/// `--config` if given, else `NVCAV_CONFIG`, else `nvcav.toml`.
pub fn config_path(flag: Option<&Path>) -> PathBuf {
    match (flag, std::env::var_os(CONFIG_ENV)) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(env)) if !env.is_empty() => PathBuf::from(env),
        _ => PathBuf::from(DEFAULT_CONFIG),
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(x) = p {
        if x.is_relative() {
            *x = base.join(&*x);
        }
    }
}

fn must_exist(p: &Option<PathBuf>, key: &str) -> Result<()> {
    match p {
        Some(x) if !x.is_file() => Err(CliError::input(format!("config: {key} '{}' does not exist", x.display()))),
        _ => Ok(()),
    }
}

impl RunConfig {
    /// Loads, resolves and validates a config file, recording its digest.
    pub fn load(path: &Path, prov: &mut Provenance) -> Result<Self> {
        let text = prov.read(path)?;
        let mut c: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        c.resolve(&base);
        c.validate()?;
        prov.seed = Some(c.seed);
        Ok(c)
    }

    fn resolve(&mut self, base: &Path) {
        resolve(base, &mut self.coefficients);
        resolve(base, &mut self.ledger);
        if let Some(s) = &mut self.sweep {
            resolve(base, &mut s.output);
        }
        if let Some(s) = &mut self.timedomain {
            resolve(base, &mut s.output);
        }
        if let Some(s) = &mut self.contrast {
            resolve(base, &mut s.output);
        }
        if let Some(s) = &mut self.synth {
            resolve(base, &mut s.output);
        }
        if let Some(f) = &mut self.fit {
            resolve(base, &mut f.output);
            for d in &mut f.datasets {
                if d.is_relative() {
                    *d = base.join(&*d);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        must_exist(&self.coefficients, "coefficients")?;
        must_exist(&self.ledger, "ledger")?;
        if let Some(f) = &self.fit {
            for d in &f.datasets {
                must_exist(&Some(d.clone()), "dataset")?;
            }
        }
        if let Some(s) = &self.sweep {
            s.n_ir.values()?;
        }
        if let Some(s) = &self.contrast {
            s.eom_frequency_Hz.values()?;
        }
        if let Some(s) = &self.synth {
            s.n_ir.values()?;
            if s.green_power_mW.is_empty() {
                return Err(CliError::input("config: synth.green_power_mW is empty"));
            }
        }
        Ok(())
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T> {
        s.as_ref().ok_or_else(|| CliError::input(format!("config has no [{name}] section")))
    }
}
