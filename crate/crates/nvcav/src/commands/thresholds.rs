use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use nvcav_core::thresholds::{
    constrain_delta0, default_catalog, derived_thresholds, min_photons, select_processes, EnergyLedger, LightSource,
    Process, Range, SourceRole, Status, Verdict,
};

use super::{display, load_optional_config};
use crate::error::{CliError, Context, Result};
use crate::provenance::{to_json, Output, Provenance};

#[derive(Debug, Clone, Args)]
pub struct ThresholdsArgs {
    /// Energy ledger JSON; the config's ledger, then the built-in one, otherwise.
    pub ledger: Option<PathBuf>,
    /// Process catalog JSON; the built-in catalog otherwise.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Light source as `<wavelength nm>:<green|ir>`, repeatable.
    #[arg(long = "source", default_values = ["532:green", "966:ir", "1524:ir"])]
    pub sources: Vec<String>,
    #[arg(long, default_value_t = 2)]
    pub max_order: u32,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Machine-readable report, JSON.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_source(s: &str) -> Result<LightSource> {
    let (wl, role) = s
        .split_once(':')
        .ok_or_else(|| CliError::input(format!("source '{s}': expected <wavelength nm>:<green|ir>")))?;
    let wl = wl.trim().trim_end_matches("nm");
    let nm: f64 = wl.parse().map_err(|_| CliError::input(format!("source '{s}': '{wl}' is not a wavelength")))?;
    let role = match role.trim() {
        "green" => SourceRole::Green,
        "ir" => SourceRole::Ir,
        r => return Err(CliError::input(format!("source '{s}': role '{r}' is not green or ir"))),
    };
    Ok(LightSource::from_wavelength(&format!("{wl}nm"), nm * 1e-9, role)?)
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
struct SourceInfo {
    label: String,
    role: SourceRole,
    photon_eV: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Report {
    ledger: EnergyLedger,
    thresholds: BTreeMap<String, Range>,
    /// Lower bound on Δ⁰ implied by each IR source, eV.
    delta0_lower_bound: BTreeMap<String, f64>,
    sources: Vec<SourceInfo>,
    max_order: u32,
    verdicts: Vec<Verdict>,
    active: Vec<String>,
    provenance: Provenance,
}

fn orders(r: &Range, s: &LightSource) -> String {
    let lo = r.min.map(|v| min_photons(v, s.photon));
    let hi = r.max.map(|v| min_photons(v, s.photon));
    match (lo, hi) {
        (Some(a), Some(b)) if a == b => a.to_string(),
        (Some(a), Some(b)) => format!("{a}-{b}"),
        (Some(a), None) => format!(">={a}"),
        (None, Some(b)) => format!("<={b}"),
        (None, None) => "?".into(),
    }
}

fn table(r: &Report, sources: &[LightSource]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<14} {:>16}", "threshold", "energy (eV)");
    for src in sources {
        let _ = write!(s, " {:>8}", src.label);
    }
    s.push('\n');
    for (k, v) in &r.thresholds {
        let _ = write!(s, "{k:<14} {:>16}", v.to_string());
        for src in sources {
            let _ = write!(s, " {:>8}", orders(v, src));
        }
        s.push('\n');
    }
    s.push('\n');
    for (label, v) in &r.delta0_lower_bound {
        let _ = writeln!(s, "Delta0 > {v:.3} eV from one {label} photon above IP(3E->2E)");
    }
    s.push('\n');
    for v in &r.verdicts {
        let status = match &v.status {
            Status::Active { ir_order, green_order } => {
                let mut parts = Vec::new();
                if let Some(n) = ir_order {
                    parts.push(format!("IR order {n}"));
                }
                if let Some(n) = green_order {
                    parts.push(format!("green order {n}"));
                }
                format!("active ({})", parts.join(", "))
            }
            Status::Rejected { reason } => format!("rejected: {reason}"),
        };
        let _ = writeln!(s, "{:<8} {:<14} {}", v.process.name, v.process.threshold, status);
    }
    s
}

pub fn thresholds(a: &ThresholdsArgs) -> Result<()> {
    let mut prov = Provenance::new("thresholds");
    let ledger_path = match &a.ledger {
        Some(p) => Some(p.clone()),
        None => load_optional_config(a.config.as_deref(), &mut prov)?.and_then(|c| c.ledger),
    };
    let ledger = match &ledger_path {
        Some(p) => {
            let t = prov.read(p)?;
            serde_json::from_str::<EnergyLedger>(&t).context(display(p))?
        }
        None => EnergyLedger::default(),
    };
    ledger.validate()?;
    let catalog: Vec<Process> = match &a.catalog {
        Some(p) => {
            let t = prov.read(p)?;
            serde_json::from_str(&t).context(display(p))?
        }
        None => default_catalog(),
    };
    let sources = a.sources.iter().map(|s| parse_source(s)).collect::<Result<Vec<_>>>()?;
    let verdicts = select_processes(&catalog, &ledger, &sources, a.max_order)?;
    let mut delta0 = BTreeMap::new();
    for s in sources.iter().filter(|s| s.role == SourceRole::Ir) {
        delta0.insert(s.label.clone(), constrain_delta0(&ledger, s.photon)?);
    }
    let report = Report {
        thresholds: derived_thresholds(&ledger),
        ledger,
        delta0_lower_bound: delta0,
        sources: sources
            .iter()
            .map(|s| SourceInfo { label: s.label.clone(), role: s.role, photon_eV: s.photon.ev() })
            .collect(),
        max_order: a.max_order,
        active: verdicts.iter().filter(|v| v.is_active()).map(|v| v.process.name.clone()).collect(),
        verdicts,
        provenance: prov,
    };
    print!("{}", table(&report, &sources));
    if a.output.is_some() {
        Output(a.output.clone()).write(&to_json(&report)?)?;
    }
    Ok(())
}
