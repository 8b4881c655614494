//! Steady state of the rate equations.
//!
//! Uniqueness is decided structurally first: the stationary distribution is
//! unique exactly when the transition graph has one closed communicating
//! class. The distribution on that class comes from GTH state reduction, and
//! the residual ‖G·p‖ is checked afterwards.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{assemble_generator, effective_rates, pl_observables, Drive, Generator, InstantRates, KineticModel, Level, PlObservables, Populations};
use crate::linalg::{matvec7, Vec7, N};
use crate::{Error, Result};

/// Closed communicating classes of the transition graph, each sorted by
/// level. A class is closed when no transition leaves it.
pub fn closed_classes(g: &Generator) -> Vec<Vec<Level>> {
    let reach = reachability(g);
    let mut classes: Vec<Vec<Level>> = Vec::new();
    for i in 0..N {
        let closed = (0..N).all(|j| !reach[i][j] || reach[j][i]);
        let first = (0..N).find(|&j| reach[i][j] && reach[j][i]) == Some(i);
        if closed && first {
            classes.push((0..N).filter(|&j| reach[i][j]).map(|j| Level::ALL[j]).collect());
        }
    }
    classes
}

fn describe(classes: &[Vec<Level>]) -> String {
    let parts: Vec<String> = classes
        .iter()
        .map(|c| {
            let names: Vec<&str> = c.iter().map(|l| l.name()).collect();
            format!("{{{}}}", names.join(", "))
        })
        .collect();
    parts.join(", ")
}

fn reachability(g: &Generator) -> [[bool; N]; N] {
    let mut reach = [[false; N]; N];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
        for (j, r) in row.iter_mut().enumerate() {
            if i != j && g.0[j][i] > 0.0 {
                *r = true;
            }
        }
    }
    for k in 0..N {
        for i in 0..N {
            if reach[i][k] {
                for j in 0..N {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Stationary distribution supported on one closed class, by GTH state
/// reduction. The reduction only adds and multiplies non-negative rates, so
/// every population keeps full relative accuracy even when rates span many
/// decades (an LU solve loses the small populations to cancellation).
/// Levels outside the class get exactly zero population.
fn solve_on_class(g: &Generator, class: &[Level]) -> Result<Populations> {
    let idx: Vec<usize> = class.iter().map(|l| l.index()).collect();
    let m = idx.len();
    // q[a][b]: rate from class member a to class member b
    let mut q = [[0.0f64; N]; N];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            if a != b {
                q[a][b] = g.0[j][i];
            }
        }
    }
    for n in (1..m).rev() {
        let s: f64 = (0..n).map(|j| q[n][j]).sum();
        if !(s > 0.0) {
            return Err(Error::invalid("steady-state reduction hit a level with no exit"));
        }
        for row in q.iter_mut().take(n) {
            row[n] /= s;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    q[i][j] += q[i][n] * q[n][j];
                }
            }
        }
    }
    let mut pi = [0.0f64; N];
    pi[0] = 1.0;
    for n in 1..m {
        pi[n] = (0..n).map(|i| pi[i] * q[i][n]).sum();
    }
    let total: f64 = pi[..m].iter().sum();
    let mut p: Vec7 = [0.0; N];
    for (a, &i) in idx.iter().enumerate() {
        p[i] = pi[a] / total;
    }

    let residual = matvec7(&g.0, &p).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = 1e-10 * g.norm_inf();
    if residual > bound {
        return Err(Error::invalid(format!(
            "steady-state residual {residual:.3e} exceeds {bound:.3e}"
        )));
    }
    Populations::new(p)
}

/// Stationary populations for a fixed rate set. Fails when the transition
/// graph has more than one closed class.
pub fn steady_state_rates(rates: &InstantRates) -> Result<Populations> {
    let g = assemble_generator(rates);
    let classes = closed_classes(&g);
    if classes.len() != 1 {
        return Err(Error::NonUniqueSteadyState {
            components: describe(&classes),
        });
    }
    solve_on_class(&g, &classes[0])
}

/// Long-time limit starting with all population in `start`. Only the closed
/// classes reachable from `start` matter, so this is unique in cases where
/// [`steady_state_rates`] is not (e.g. a subsystem with isolated levels).
pub fn steady_state_from(rates: &InstantRates, start: Level) -> Result<Populations> {
    let g = assemble_generator(rates);
    let reach = reachability(&g);
    let classes: Vec<Vec<Level>> = closed_classes(&g)
        .into_iter()
        .filter(|c| reach[start.index()][c[0].index()])
        .collect();
    if classes.len() != 1 {
        return Err(Error::NonUniqueSteadyState {
            components: describe(&classes),
        });
    }
    solve_on_class(&g, &classes[0])
}

/// Stationary populations under a constant drive.
pub fn steady_state(model: &KineticModel, drive: Drive) -> Result<Populations> {
    drive.validate()?;
    steady_state_rates(&effective_rates(model, drive))
}

/// One point of a steady-state sweep over IR photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub n_ir: f64,
    pub populations: Populations,
    pub pl: PlObservables,
    /// PL relative to the same green power without IR.
    pub pl_nvm_norm: f64,
    pub pl_nv0_norm: f64,
}

/// Steady state at each IR photon number, with PL normalized to N = 0.
pub fn pl_sweep(model: &KineticModel, green_power: f64, n_values: &[f64]) -> Result<Vec<SweepPoint>> {
    let reference = pl_observables(&steady_state(model, Drive::new(green_power, 0.0)?)?, model);
    if !(reference.nv_minus > 0.0) || !(reference.nv_zero > 0.0) {
        return Err(Error::domain("reference PL without IR vanishes; cannot normalize"));
    }
    n_values
        .iter()
        .map(|&n| {
            let populations = steady_state(model, Drive::new(green_power, n)?)?;
            let pl = pl_observables(&populations, model);
            Ok(SweepPoint {
                n_ir: n,
                populations,
                pl,
                pl_nvm_norm: pl.nv_minus / reference.nv_minus,
                pl_nv0_norm: pl.nv_zero / reference.nv_zero,
            })
        })
        .collect()
}
