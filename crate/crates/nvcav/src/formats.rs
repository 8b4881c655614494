//! CSV and JSON file formats.
//!
//! CSV files may start with `#` comment lines (the provenance header) and
//! must carry the exact column names listed for each format. Readers reject
//! a misnamed or unexpected column by name.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use nvcav_core::calib::{Channel, CompiledDataset, DataPoint, FitResult, Parameter};
use nvcav_core::cavity::{CavityMode, DetuningScan, LineshapeFit, PlTraces};
use nvcav_core::interaction::{FieldGrid, GridNode};
use nvcav_core::kinetics::RateCoefficients;

use crate::error::{CliError, Context, Result};
use crate::provenance::{num, Provenance};

/// A parsed CSV body with its validated header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// 1-based line of each row in the source, for messages.
    lines: Vec<u64>,
    what: String,
}

/// Parses `text`, requiring the `required` columns first and in order,
/// followed by any subset of `optional`.
pub fn read_table(text: &str, required: &[&str], optional: &[&str], what: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().context(what)?.iter().map(str::to_string).collect();
    for (i, want) in required.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(CliError::input(format!(
                    "{what}: column {} is '{got}', expected '{want}'",
                    i + 1
                )))
            }
            None => return Err(CliError::input(format!("{what}: missing column '{want}'"))),
        }
    }
    let mut seen = BTreeSet::new();
    for got in &header[required.len()..] {
        if !optional.contains(&got.as_str()) || !seen.insert(got.as_str()) {
            return Err(CliError::input(format!("{what}: unexpected column '{got}'")));
        }
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.context(what)?;
        lines.push(rec.position().map_or(0, |p| p.line()));
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { columns: header, rows, lines, what: what.to_string() })
}

impl Table {
    pub fn has(&self, column: &str) -> bool {
        self.columns.iter().any(|c| c == column)
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| CliError::input(format!("{}: missing column '{column}'", self.what)))
    }

    pub fn str(&self, row: usize, column: &str) -> Result<&str> {
        Ok(&self.rows[row][self.index(column)?])
    }

    pub fn f64(&self, row: usize, column: &str) -> Result<f64> {
        let s = self.str(row, column)?;
        s.parse::<f64>().map_err(|_| {
            CliError::input(format!("{}: line {}, column '{column}': '{s}' is not a number", self.what, self.lines[row]))
        })
    }

    pub fn f64_column(&self, column: &str) -> Result<Vec<f64>> {
        (0..self.rows.len()).map(|i| self.f64(i, column)).collect()
    }

    pub fn flag(&self, row: usize, column: &str) -> Result<bool> {
        match self.str(row, column)? {
            "0" => Ok(false),
            "1" => Ok(true),
            s => Err(CliError::input(format!(
                "{}: line {}, column '{column}': '{s}' is not 0 or 1",
                self.what, self.lines[row]
            ))),
        }
    }
}

/// Renders a CSV document under the provenance header.
pub fn write_table(prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
    Ok(prov.header() + &String::from_utf8(body).expect("CSV of UTF-8 fields"))
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

// ---------------------------------------------------------------- scans

pub const SCAN_COLUMNS: [&str; 2] = ["wavelength_nm", "transmission"];
pub const SCAN_PL_COLUMNS: [&str; 2] = ["pl_nv0", "pl_nvm"];

/// Sidecar metadata of a detuning scan, `<scan>.json` next to `<scan>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ScanMeta {
    /// Power launched into the taper, mW.
    pub input_power_mW: f64,
    pub taper_transmission_efficiency: f64,
    /// No-IR PL of each channel; the lowest-photon-number sample is used
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_pl_nv0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_pl_nvm: Option<f64>,
}

pub fn sidecar_path(scan: &Path) -> PathBuf {
    scan.with_extension("json")
}

/// Parses a scan. Rows may come in any wavelength order; the scan is
/// returned ascending. Without metadata the launched power is recorded as
/// 1 mW, which only matters for photon numbers.
pub fn read_scan(text: &str, meta: Option<&ScanMeta>, what: &str) -> Result<DetuningScan> {
    let t = read_table(text, &SCAN_COLUMNS, &SCAN_PL_COLUMNS, what)?;
    let with_pl = t.has("pl_nv0") || t.has("pl_nvm");
    if with_pl && !(t.has("pl_nv0") && t.has("pl_nvm")) {
        return Err(CliError::input(format!("{what}: columns 'pl_nv0' and 'pl_nvm' must appear together")));
    }
    let mut rows = Vec::with_capacity(t.rows.len());
    for i in 0..t.rows.len() {
        let pl = if with_pl { Some((t.f64(i, "pl_nv0")?, t.f64(i, "pl_nvm")?)) } else { None };
        rows.push((t.f64(i, "wavelength_nm")? * 1e-9, t.f64(i, "transmission")?, pl));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let reference = match meta {
        Some(ScanMeta { reference_pl_nv0: Some(a), reference_pl_nvm: Some(b), .. }) => Some((*a, *b)),
        Some(ScanMeta { reference_pl_nv0: None, reference_pl_nvm: None, .. }) | None => None,
        Some(_) => {
            return Err(CliError::input(format!(
                "{what}: metadata must give both reference_pl_nv0 and reference_pl_nvm or neither"
            )))
        }
    };
    let input_power = match meta {
        Some(m) => {
            if !(m.taper_transmission_efficiency > 0.0 && m.taper_transmission_efficiency <= 1.0) {
                return Err(CliError::input(format!("{what}: taper_transmission_efficiency must be in (0, 1]")));
            }
            m.input_power_mW * 1e-3
        }
        None => 1e-3,
    };
    let scan = DetuningScan {
        wavelengths: rows.iter().map(|r| r.0).collect(),
        transmission: rows.iter().map(|r| r.1).collect(),
        pl: with_pl.then(|| PlTraces {
            nv_zero: rows.iter().map(|r| r.2.unwrap().0).collect(),
            nv_minus: rows.iter().map(|r| r.2.unwrap().1).collect(),
            reference,
        }),
        input_power,
    };
    scan.validate().context(what)?;
    Ok(scan)
}

pub fn write_scan(prov: &Provenance, scan: &DetuningScan) -> Result<String> {
    let mut header = SCAN_COLUMNS.to_vec();
    if scan.pl.is_some() {
        header.extend(SCAN_PL_COLUMNS);
    }
    let rows: Vec<Vec<String>> = (0..scan.wavelengths.len())
        .map(|i| {
            let mut r = vec![num(scan.wavelengths[i] * 1e9), num(scan.transmission[i])];
            if let Some(pl) = &scan.pl {
                r.push(num(pl.nv_zero[i]));
                r.push(num(pl.nv_minus[i]));
            }
            r
        })
        .collect();
    write_table(prov, &header, &rows)
}

// ---------------------------------------------------------------- modes

/// A cavity mode as written by `cavity-fit`: the mode's SI fields plus
/// derived figures. Readers take the mode fields and ignore the rest.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct ModeFile {
    #[serde(flatten)]
    pub mode: CavityMode,
    pub Q_loaded: f64,
    /// Loaded Q of each resolved dip, ascending wavelength.
    pub dip_Q: Vec<f64>,
    pub fit_rms: f64,
    pub provenance: Provenance,
}

impl ModeFile {
    pub fn new(fit: &LineshapeFit, provenance: Provenance) -> Self {
        ModeFile {
            mode: fit.mode.clone(),
            Q_loaded: fit.mode.loaded_q(),
            dip_Q: fit.dip_q.clone(),
            fit_rms: fit.rms,
            provenance,
        }
    }
}

pub fn read_mode(text: &str, what: &str) -> Result<CavityMode> {
    let mode: CavityMode = serde_json::from_str(text).context(what)?;
    mode.validate().context(what)?;
    Ok(mode)
}

// ---------------------------------------------------------------- grids

pub const GRID_COLUMNS: [&str; 7] = ["r_m", "z_m", "weight_m3", "e2_ir", "e2_nv", "eps", "in_excitation"];

pub fn read_grid(text: &str, what: &str) -> Result<FieldGrid> {
    let t = read_table(text, &GRID_COLUMNS, &["e2_green"], what)?;
    let green = t.has("e2_green");
    let mut nodes = Vec::with_capacity(t.rows.len());
    for i in 0..t.rows.len() {
        nodes.push(GridNode {
            r: t.f64(i, "r_m")?,
            z: t.f64(i, "z_m")?,
            weight: t.f64(i, "weight_m3")?,
            e2_ir: t.f64(i, "e2_ir")?,
            e2_nv: t.f64(i, "e2_nv")?,
            eps: t.f64(i, "eps")?,
            in_excitation: t.flag(i, "in_excitation")?,
            e2_green: if green { Some(t.f64(i, "e2_green")?) } else { None },
        });
    }
    FieldGrid::new(nodes).context(what)
}

pub fn write_grid(prov: &Provenance, grid: &FieldGrid) -> Result<String> {
    let green = grid.has_green_weights();
    let mut header = GRID_COLUMNS.to_vec();
    if green {
        header.push("e2_green");
    }
    let rows: Vec<Vec<String>> = grid
        .nodes
        .iter()
        .map(|n| {
            let mut r = vec![
                num(n.r),
                num(n.z),
                num(n.weight),
                num(n.e2_ir),
                num(n.e2_nv),
                num(n.eps),
                flag(n.in_excitation),
            ];
            if green {
                r.push(num(n.e2_green.unwrap_or(0.0)));
            }
            r
        })
        .collect();
    write_table(prov, &header, &rows)
}

// ---------------------------------------------------------------- datasets

pub const DATASET_COLUMNS: [&str; 5] = ["n_ir", "pl_norm", "channel", "green_power_mW", "ir_label"];

/// Reads compiled points, one dataset per (IR label, green power) in order
/// of first appearance.
pub fn read_datasets(text: &str, what: &str) -> Result<Vec<CompiledDataset>> {
    let t = read_table(text, &DATASET_COLUMNS, &[], what)?;
    let mut groups: Vec<(String, f64, Vec<DataPoint>)> = Vec::new();
    for i in 0..t.rows.len() {
        let label = t.str(i, "ir_label")?.to_string();
        let pg = t.f64(i, "green_power_mW")?;
        let ch = t.str(i, "channel")?;
        let channel = Channel::from_name(ch)
            .ok_or_else(|| CliError::input(format!("{what}: row {}: unknown channel '{ch}' (NV- or NV0)", i + 1)))?;
        let p = DataPoint { n_ir: t.f64(i, "n_ir")?, pl_norm: t.f64(i, "pl_norm")?, channel };
        match groups.iter_mut().find(|g| g.0 == label && g.1.to_bits() == pg.to_bits()) {
            Some(g) => g.2.push(p),
            None => groups.push((label, pg, vec![p])),
        }
    }
    if groups.is_empty() {
        return Err(CliError::input(format!("{what}: no data rows")));
    }
    groups
        .into_iter()
        .map(|(l, pg, pts)| CompiledDataset::from_points(&l, pg, pts, 0.0).context(what))
        .collect()
}

pub fn write_datasets(prov: &Provenance, sets: &[CompiledDataset]) -> Result<String> {
    let mut rows = Vec::new();
    for d in sets {
        for p in &d.points {
            rows.push(vec![
                num(p.n_ir),
                num(p.pl_norm),
                p.channel.name().to_string(),
                num(d.green_power),
                d.ir_label.clone(),
            ]);
        }
    }
    write_table(prov, &DATASET_COLUMNS, &rows)
}

// ---------------------------------------------------------------- kinetics outputs

pub const POPULATION_COLUMNS: [&str; 7] = ["p1", "p2", "p3", "p4", "p5", "p6", "p7"];

/// Header of a steady-state sweep: `N_IR, p1..p7, pl_nvm_norm, pl_nv0_norm, flag`.
/// `flag` is empty for good rows and names the failure otherwise.
pub fn sweep_header() -> Vec<&'static str> {
    let mut h = vec!["N_IR"];
    h.extend(POPULATION_COLUMNS);
    h.extend(["pl_nvm_norm", "pl_nv0_norm", "flag"]);
    h
}

/// Header of a time trace: `t_s, N_IR, p1..p7, pl_nvm_norm, pl_nv0_norm, settled`.
pub fn trace_header() -> Vec<&'static str> {
    let mut h = vec!["t_s", "N_IR"];
    h.extend(POPULATION_COLUMNS);
    h.extend(["pl_nvm_norm", "pl_nv0_norm", "settled"]);
    h
}

pub const CONTRAST_COLUMNS: [&str; 8] =
    ["eom_frequency_Hz", "contrast", "pl_max", "pl_min", "periods", "period_change", "settled", "dc_contrast"];

// ---------------------------------------------------------------- coefficients

/// Reads a coefficient set: either the plain form, or a fit output whose
/// `coefficients` leaves are `{ "value": .., "fitted": .. }`.
pub fn read_coefficients(text: &str, what: &str) -> Result<RateCoefficients> {
    let v: Value = serde_json::from_str(text).context(what)?;
    let plain = match v.get("coefficients") {
        Some(annotated) => strip_annotations(annotated),
        None => v,
    };
    let c: RateCoefficients = serde_json::from_value(plain).context(what)?;
    c.validate().context(what)?;
    Ok(c)
}

fn strip_annotations(v: &Value) -> Value {
    match v {
        Value::Object(m) if m.contains_key("value") && m.contains_key("fitted") => m["value"].clone(),
        Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), strip_annotations(x))).collect()),
        other => other.clone(),
    }
}

/// The coefficient tree with each value replaced by `{value, fitted}`.
pub fn annotate_coefficients(c: &RateCoefficients, fitted: &[Parameter]) -> Result<Value> {
    fn walk(v: &Value, path: &[&str], fitted: &[Parameter]) -> Value {
        match v {
            Value::Object(m) => {
                let mut out = Map::new();
                for (k, x) in m {
                    let mut p = path.to_vec();
                    p.push(k);
                    out.insert(k.clone(), walk(x, &p, fitted));
                }
                Value::Object(out)
            }
            Value::Number(_) => {
                let key = path.last().copied().unwrap_or("");
                let label = (path.len() == 3 && path[0] == "ir_per_photon").then(|| path[1]);
                let is_fitted = fitted.iter().any(|f| f.key() == key && f.ir_label() == label);
                serde_json::json!({ "value": v, "fitted": is_fitted })
            }
            other => other.clone(),
        }
    }
    Ok(walk(&serde_json::to_value(c)?, &[], fitted))
}

/// Parses a free-parameter name: a coefficient key, with `[label]` for the
/// IR ones, e.g. `K^i_25,2-IR [966nm]`.
pub fn parse_parameter(s: &str) -> Result<Parameter> {
    let s = s.trim();
    let (key, label) = match s.split_once('[') {
        Some((k, rest)) => {
            let l = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::input(format!("parameter '{s}': unclosed '['")))?;
            (k.trim(), Some(l.trim().to_string()))
        }
        None => (s, None),
    };
    let p = match (key, label) {
        ("K^i_25,1-G", None) => Parameter::K25Green,
        ("K^r_51,1-G", None) => Parameter::K51Green,
        ("K^r_74,1-G", None) => Parameter::K74Green,
        ("K_56", None) => Parameter::K56,
        ("K_75", None) => Parameter::K75,
        ("K^i_25,2-IR", Some(l)) => Parameter::K25Ir(l),
        ("K^r_74,1-IR", Some(l)) => Parameter::K74Ir(l),
        ("K^i_25,2-IR" | "K^r_74,1-IR", None) => {
            return Err(CliError::input(format!("parameter '{s}' needs an IR label, e.g. '{s} [966nm]'")))
        }
        _ => return Err(CliError::input(format!("'{s}' is not a fittable coefficient"))),
    };
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedEntry {
    pub name: String,
    pub initial: f64,
    pub value: f64,
    /// One-sigma scale of ln(value) from the curvature at the optimum.
    pub log_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub loss: nvcav_core::calib::Loss,
    pub converged: bool,
    pub termination: nvcav_core::optim::Termination,
    pub iterations: usize,
    pub residual_rms: f64,
    pub rank: usize,
    pub diagnostic: Option<String>,
    pub parameters: Vec<FittedEntry>,
    pub start_costs: Vec<f64>,
    pub cost_history: Vec<f64>,
}

/// The document written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitFile {
    pub coefficients: Value,
    pub fit: FitSummary,
    pub options: Value,
    pub provenance: Provenance,
}

impl FitFile {
    pub fn new(r: &FitResult, options: Value, provenance: Provenance) -> Result<Self> {
        let fitted: Vec<Parameter> = r.parameters.iter().map(|p| p.parameter.clone()).collect();
        Ok(FitFile {
            coefficients: annotate_coefficients(&r.coefficients, &fitted)?,
            fit: FitSummary {
                loss: r.loss,
                converged: r.converged,
                termination: r.termination,
                iterations: r.iterations,
                residual_rms: r.residual_rms,
                rank: r.rank,
                diagnostic: r.diagnostic.clone(),
                parameters: r
                    .parameters
                    .iter()
                    .map(|p| FittedEntry {
                        name: p.parameter.to_string(),
                        initial: p.initial,
                        value: p.value,
                        log_sigma: p.log_sigma,
                    })
                    .collect(),
                start_costs: r.start_costs.clone(),
                cost_history: r.cost_history.clone(),
            },
            options,
            provenance,
        })
    }
}
