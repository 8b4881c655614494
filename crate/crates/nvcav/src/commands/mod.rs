//! Subcommands. Each one reads its inputs through [`Provenance`] so the
//! output header lists their digests.

mod calib;
mod cavity;
mod field;
mod kinetics;
mod thresholds;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use nvcav_core::kinetics::{published_fit, RateCoefficients};

use crate::config::{self, RunConfig};
use crate::error::Result;
use crate::formats;
use crate::provenance::{Output, Provenance};

#[derive(Debug, Parser)]
#[command(name = "nvcav", version, about = "Photodynamics of cavity-coupled NV centers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a transmission scan and write the cavity mode as JSON.
    CavityFit(cavity::CavityFitArgs),
    /// Mean intracavity photon number at a given power and detuning.
    Photons(cavity::PhotonsArgs),
    /// Turn detuning scans with PL into a compiled dataset CSV.
    Compile(cavity::CompileArgs),
    /// Emit an analytic Gaussian-ring field grid.
    Grid(field::GridArgs),
    /// Confinement factor of a field grid.
    Gamma(field::GammaArgs),
    /// IR cross sections from fitted rate coefficients.
    Xsection(field::XsectionArgs),
    /// Threshold ledger report and process selection.
    Thresholds(thresholds::ThresholdsArgs),
    /// Steady-state populations and PL against IR photon number.
    Sweep(ConfigArgs),
    /// Time trace under square-wave IR modulation.
    Timedomain(ConfigArgs),
    /// NV⁻ PL contrast against modulation frequency.
    Contrast(ConfigArgs),
    /// Synthetic compiled datasets from a coefficient set.
    Synth(ConfigArgs),
    /// Joint fit of IR- and green-driven coefficients to datasets.
    Fit(calib::FitArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML). Defaults to $NVCAV_CONFIG, then ./nvcav.toml.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; overrides the config. Standard output when neither is set.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Singlet,
    Doublet,
    TwoLorentzian,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CavityFit(a) => cavity::cavity_fit(&a),
        Command::Photons(a) => cavity::photons(&a),
        Command::Compile(a) => cavity::compile(&a),
        Command::Grid(a) => field::grid(&a),
        Command::Gamma(a) => field::gamma(&a),
        Command::Xsection(a) => field::xsection(&a),
        Command::Thresholds(a) => thresholds::thresholds(&a),
        Command::Sweep(a) => kinetics::sweep(&a),
        Command::Timedomain(a) => kinetics::timedomain(&a),
        Command::Contrast(a) => kinetics::contrast(&a),
        Command::Synth(a) => calib::synth(&a),
        Command::Fit(a) => calib::fit(&a),
    }
}

/// Loads the required run configuration.
fn load_config(flag: Option<&Path>, prov: &mut Provenance) -> Result<RunConfig> {
    RunConfig::load(&config::config_path(flag), prov)
}

/// Loads a configuration only if one was asked for or `nvcav.toml` exists.
fn load_optional_config(flag: Option<&Path>, prov: &mut Provenance) -> Result<Option<RunConfig>> {
    let path = config::config_path(flag);
    let explicit = flag.is_some() || std::env::var_os(config::CONFIG_ENV).is_some_and(|v| !v.is_empty());
    if explicit || path.is_file() {
        RunConfig::load(&path, prov).map(Some)
    } else {
        Ok(None)
    }
}

fn coefficients(cfg: &RunConfig, prov: &mut Provenance) -> Result<RateCoefficients> {
    match &cfg.coefficients {
        Some(p) => {
            let text = prov.read(p)?;
            formats::read_coefficients(&text, &p.display().to_string())
        }
        None => Ok(published_fit()),
    }
}

fn output(flag: &Option<PathBuf>, configured: &Option<PathBuf>) -> Output {
    Output(flag.clone().or_else(|| configured.clone()))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
