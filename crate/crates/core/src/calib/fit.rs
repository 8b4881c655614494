use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Channel, CompiledDataset};
use crate::kinetics::{effective_rates, pl_observables, steady_state_rates, Drive, RateCoefficients};
use crate::linalg::PivotedQr;
use crate::optim::{minimize, LmOptions, LmReport, Residuals, Termination};
use crate::{Error, Result};

/// A fittable coefficient. IR coefficients are per wavelength label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Parameter {
    K25Green,
    K51Green,
    K74Green,
    K56,
    K75,
    K25Ir(String),
    K74Ir(String),
}

impl Parameter {
    /// Coefficient key as used in coefficient files.
    pub fn key(&self) -> &'static str {
        match self {
            Parameter::K25Green => "K^i_25,1-G",
            Parameter::K51Green => "K^r_51,1-G",
            Parameter::K74Green => "K^r_74,1-G",
            Parameter::K56 => "K_56",
            Parameter::K75 => "K_75",
            Parameter::K25Ir(_) => "K^i_25,2-IR",
            Parameter::K74Ir(_) => "K^r_74,1-IR",
        }
    }

    pub fn ir_label(&self) -> Option<&str> {
        match self {
            Parameter::K25Ir(l) | Parameter::K74Ir(l) => Some(l),
            _ => None,
        }
    }

    pub fn get(&self, c: &RateCoefficients) -> Option<f64> {
        Some(match self {
            Parameter::K25Green => c.green_per_mw.k_25_1g,
            Parameter::K51Green => c.green_per_mw.k_51_1g,
            Parameter::K74Green => c.green_per_mw.k_74_1g,
            Parameter::K56 => c.internal.k_56,
            Parameter::K75 => c.internal.k_75,
            Parameter::K25Ir(l) => c.ir_per_photon.get(l)?.k_25_2ir,
            Parameter::K74Ir(l) => c.ir_per_photon.get(l)?.k_74_1ir,
        })
    }

    fn set(&self, c: &mut RateCoefficients, v: f64) {
        match self {
            Parameter::K25Green => c.green_per_mw.k_25_1g = v,
            Parameter::K51Green => c.green_per_mw.k_51_1g = v,
            Parameter::K74Green => c.green_per_mw.k_74_1g = v,
            Parameter::K56 => c.internal.k_56 = v,
            Parameter::K75 => c.internal.k_75 = v,
            Parameter::K25Ir(l) => {
                if let Some(ir) = c.ir_per_photon.get_mut(l) {
                    ir.k_25_2ir = v;
                }
            }
            Parameter::K74Ir(l) => {
                if let Some(ir) = c.ir_per_photon.get_mut(l) {
                    ir.k_74_1ir = v;
                }
            }
        }
    }
}

impl core::fmt::Display for Parameter {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self.ir_label() {
            Some(l) => write!(f, "{} [{l}]", self.key()),
            None => f.write_str(self.key()),
        }
    }
}

/// Residual definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Loss {
    /// model − data on normalized PL.
    #[default]
    Linear,
    /// ln(model) − ln(data); needs positive data.
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub loss: Loss,
    /// Free parameters. `None` frees the five shared coefficients plus both
    /// IR coefficients of every label in the datasets.
    pub free: Option<Vec<Parameter>>,
    /// Per-dataset weights; equal when absent.
    pub weights: Option<Vec<f64>>,
    /// Extra starts besides the supplied initial guess.
    pub restarts: usize,
    /// Restarts are drawn uniformly within ± this many decades of the guess.
    pub restart_spread_decades: f64,
    pub seed: u64,
    /// Relative threshold on the pivoted-QR diagonal for the rank diagnostic.
    pub rank_tol: f64,
    pub lm: LmOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            loss: Loss::Linear,
            free: None,
            weights: None,
            restarts: 0,
            restart_spread_decades: 0.5,
            seed: 0,
            rank_tol: 1e-10,
            lm: LmOptions {
                max_iterations: 300,
                ftol: 1e-15,
                xtol: 1e-16,
                gtol: 1e-15,
                ..LmOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FittedParameter {
    pub parameter: Parameter,
    pub initial: f64,
    pub value: f64,
    /// One-sigma scale of ln(value) from the curvature at the optimum.
    /// Absent when the Jacobian is rank deficient.
    pub log_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    /// Input coefficients with the fitted ones replaced.
    pub coefficients: RateCoefficients,
    pub parameters: Vec<FittedParameter>,
    /// RMS of the residuals (normalized PL, or its log).
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Numerical rank of the Jacobian at the optimum.
    pub rank: usize,
    pub diagnostic: Option<String>,
    /// Cost after each accepted step of the best start.
    pub cost_history: Vec<f64>,
    /// Final cost of every start, in the order tried.
    pub start_costs: Vec<f64>,
    pub loss: Loss,
    pub seed: u64,
}

impl FitResult {
    pub fn value(&self, p: &Parameter) -> Option<f64> {
        self.parameters.iter().find(|f| &f.parameter == p).map(|f| f.value)
    }
}

struct Prepared<'a> {
    ds: &'a CompiledDataset,
    weight: f64,
    /// distinct photon numbers
    n_values: Vec<f64>,
    /// per point, index into `n_values`
    index: Vec<usize>,
}

struct Problem<'a> {
    sets: Vec<Prepared<'a>>,
    base: RateCoefficients,
    params: Vec<Parameter>,
    loss: Loss,
    len: usize,
}

impl Problem<'_> {
    fn coefficients(&self, x: &[f64]) -> RateCoefficients {
        let mut c = self.base.clone();
        for (p, v) in self.params.iter().zip(x) {
            p.set(&mut c, v.exp());
        }
        c
    }
}

impl Residuals for Problem<'_> {
    fn len(&self) -> usize {
        self.len
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> bool {
        let c = self.coefficients(x);
        let mut k = 0;
        for set in &self.sets {
            let Ok(model) = c.model(&set.ds.ir_label) else { return false };
            let pl_at = |n: f64| -> Option<(f64, f64)> {
                let rates = effective_rates(&model, Drive { green_power: set.ds.green_power, n_ir: n });
                let pl = pl_observables(&steady_state_rates(&rates).ok()?, &model);
                Some((pl.nv_minus, pl.nv_zero))
            };
            let Some((ref_m, ref_z)) = pl_at(0.0) else { return false };
            if !(ref_m > 0.0 && ref_z > 0.0) {
                return false;
            }
            let mut cache = Vec::with_capacity(set.n_values.len());
            for &n in &set.n_values {
                let Some((m, z)) = pl_at(n) else { return false };
                cache.push((m / ref_m, z / ref_z));
            }
            for (p, &i) in set.ds.points.iter().zip(&set.index) {
                let model_pl = match p.channel {
                    Channel::NvMinus => cache[i].0,
                    Channel::NvZero => cache[i].1,
                };
                out[k] = set.weight
                    * match self.loss {
                        Loss::Linear => model_pl - p.pl_norm,
                        Loss::Log => {
                            if !(model_pl > 0.0) {
                                return false;
                            }
                            model_pl.ln() - p.pl_norm.ln()
                        }
                    };
                k += 1;
            }
        }
        true
    }
}

fn default_free(datasets: &[CompiledDataset]) -> Vec<Parameter> {
    let labels: BTreeSet<&str> = datasets.iter().map(|d| d.ir_label.as_str()).collect();
    let mut v = vec![Parameter::K25Green, Parameter::K51Green, Parameter::K74Green, Parameter::K56, Parameter::K75];
    for l in labels {
        v.push(Parameter::K25Ir(l.to_string()));
        v.push(Parameter::K74Ir(l.to_string()));
    }
    v
}

/// Least-squares fit of the drive-dependent coefficients to all datasets at
/// once, in log space so every rate stays positive.
///
/// Green coefficients and K_56, K_75 are shared by all datasets; IR
/// coefficients are shared by datasets with the same IR label. Coefficients
/// not being fitted are taken from `initial`, which also supplies the
/// starting guess. A rank-deficient problem is reported as not converged.
pub fn joint_fit(datasets: &[CompiledDataset], initial: &RateCoefficients, opts: &FitOptions) -> Result<FitResult> {
    if datasets.is_empty() {
        return Err(Error::invalid("no datasets to fit"));
    }
    initial.validate()?;
    for d in datasets {
        d.validate()?;
        if !initial.ir_per_photon.contains_key(&d.ir_label) {
            return Err(Error::Configuration(format!(
                "dataset IR label '{}' has no coefficients in the initial set",
                d.ir_label
            )));
        }
        if opts.loss == Loss::Log && d.points.iter().any(|p| !(p.pl_norm > 0.0)) {
            return Err(Error::invalid("log loss needs strictly positive normalized PL"));
        }
    }
    let params = opts.free.clone().unwrap_or_else(|| default_free(datasets));
    if params.is_empty() {
        return Err(Error::Configuration("no free parameters".into()));
    }
    let used: BTreeSet<&str> = datasets.iter().map(|d| d.ir_label.as_str()).collect();
    let mut seen = BTreeSet::new();
    let mut x0 = Vec::with_capacity(params.len());
    for p in &params {
        if !seen.insert(p.clone()) {
            return Err(Error::Configuration(format!("{p} listed twice")));
        }
        if let Some(l) = p.ir_label() {
            if !used.contains(l) {
                return Err(Error::Configuration(format!("{p}: no dataset carries IR label '{l}'")));
            }
        }
        let v = p
            .get(initial)
            .ok_or_else(|| Error::Configuration(format!("{p}: no initial value")))?;
        if !(v > 0.0) {
            return Err(Error::Configuration(format!("{p}: initial guess must be > 0 for a log-space fit")));
        }
        x0.push(v.ln());
    }
    let weights = match &opts.weights {
        Some(w) if w.len() != datasets.len() => {
            return Err(Error::invalid(format!("{} weights for {} datasets", w.len(), datasets.len())))
        }
        Some(w) if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => return Err(Error::invalid("dataset weights must be >= 0")),
        Some(w) => w.clone(),
        None => vec![1.0; datasets.len()],
    };

    let sets: Vec<Prepared> = datasets
        .iter()
        .zip(&weights)
        .map(|(ds, &weight)| {
            let mut n_values: Vec<f64> = ds.points.iter().map(|p| p.n_ir).collect();
            n_values.sort_by(f64::total_cmp);
            n_values.dedup();
            let index = ds
                .points
                .iter()
                .map(|p| n_values.partition_point(|&v| v < p.n_ir))
                .collect();
            Prepared { ds, weight, n_values, index }
        })
        .collect();
    let len = datasets.iter().map(|d| d.points.len()).sum();
    let problem = Problem {
        sets,
        base: initial.clone(),
        params: params.clone(),
        loss: opts.loss,
        len,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let spread = opts.restart_spread_decades * core::f64::consts::LN_10;
    let mut best: Option<LmReport> = None;
    let mut start_costs = Vec::with_capacity(opts.restarts + 1);
    for s in 0..=opts.restarts {
        let start: Vec<f64> = if s == 0 {
            x0.clone()
        } else {
            x0.iter().map(|v| v + spread * rng.random_range(-1.0..=1.0)).collect()
        };
        let rep = minimize(&problem, &start, &opts.lm);
        start_costs.push(rep.cost);
        if best.as_ref().is_none_or(|b| rep.cost < b.cost) {
            best = Some(rep);
        }
    }
    let rep = best.expect("at least one start");
    if rep.termination == Termination::InvalidStart {
        return Err(Error::invalid("model cannot be evaluated at the initial guess"));
    }

    let n = params.len();
    let (rank, inv_diag) = match &rep.jacobian {
        Some(j) => {
            let qr = PivotedQr::new(j);
            let rank = qr.rank(opts.rank_tol);
            let inv = if rank == n { qr.inverse_gram_diagonal() } else { None };
            (rank, inv)
        }
        None => (0, None),
    };
    let dof = len.saturating_sub(n);
    let s2 = if dof > 0 { 2.0 * rep.cost / dof as f64 } else { f64::NAN };
    let mut diagnostic = None;
    if rank < n {
        diagnostic = Some(format!(
            "Jacobian rank {rank} < {n} free parameters ({len} residuals): coefficients not identifiable from these data"
        ));
    } else if !rep.converged() {
        diagnostic = Some(format!("optimizer stopped: {:?}", rep.termination));
    }
    let parameters = params
        .iter()
        .enumerate()
        .map(|(i, p)| FittedParameter {
            parameter: p.clone(),
            initial: x0[i].exp(),
            value: rep.x[i].exp(),
            log_sigma: inv_diag.as_ref().filter(|_| s2.is_finite()).map(|d| (d[i] * s2).sqrt()),
        })
        .collect();
    Ok(FitResult {
        coefficients: problem.coefficients(&rep.x),
        parameters,
        residual_rms: (2.0 * rep.cost / len as f64).sqrt(),
        iterations: rep.iterations,
        converged: rep.converged() && rank == n,
        termination: rep.termination,
        rank,
        diagnostic,
        cost_history: rep.cost_history,
        start_costs,
        loss: opts.loss,
        seed: opts.seed,
    })
}
