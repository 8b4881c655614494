//! PL contrast under square-wave IR modulation.

use super::propagate::{Propagator, PropagatorCache};
use super::{effective_quartet_decay, pl_observables, steady_state, Drive, KineticModel, Populations};
use crate::linalg::{identity7, Lu7, Vec7, N};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContrastOptions {
    /// Fraction of each period at the high IR level.
    pub duty: f64,
    /// PL samples per period.
    pub samples_per_period: usize,
    /// Largest relative period-to-period PL change accepted as settled.
    pub settle_tol: f64,
}

impl Default for ContrastOptions {
    fn default() -> Self {
        ContrastOptions {
            duty: 0.5,
            samples_per_period: 400,
            settle_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContrastResult {
    /// (max − min)/max of NV⁻ PL over one settled period.
    pub contrast: f64,
    pub pl_max: f64,
    pub pl_min: f64,
    /// Periods propagated before measuring.
    pub periods: usize,
    /// Relative PL change between the starts of the last two periods.
    pub period_change: f64,
    pub settled: bool,
}

fn low_level(n_high: f64, extinction_db: f64) -> f64 {
    n_high * 10f64.powf(-extinction_db / 10.0)
}

fn check_inputs(green_power: f64, n_high: f64, extinction_db: f64) -> Result<()> {
    Drive::new(green_power, n_high)?;
    if !(extinction_db >= 0.0) {
        return Err(Error::domain(alloc::format!("extinction must be >= 0 dB, got {extinction_db}")));
    }
    Ok(())
}

/// Contrast between the two steady states of an unmodulated drive at the high
/// and low IR levels.
pub fn dc_contrast(model: &KineticModel, green_power: f64, n_high: f64, extinction_db: f64) -> Result<f64> {
    check_inputs(green_power, n_high, extinction_db)?;
    let hi = pl_observables(&steady_state(model, Drive::new(green_power, n_high)?)?, model).nv_minus;
    let lo = pl_observables(
        &steady_state(model, Drive::new(green_power, low_level(n_high, extinction_db))?)?,
        model,
    )
    .nv_minus;
    let max = hi.max(lo);
    if !(max > 0.0) {
        return Err(Error::domain("NV⁻ PL vanishes at both drive levels"));
    }
    Ok((max - hi.min(lo)) / max)
}

/// Stationary vector of a one-period propagator.
fn periodic_fixed_point(m: &Propagator) -> Result<Populations> {
    let id = identity7();
    let mut a: [[f64; N]; N] = core::array::from_fn(|i| core::array::from_fn(|j| m.matrix()[i][j] - id[i][j]));
    a[N - 1] = [1.0; N];
    let mut b: Vec7 = [0.0; N];
    b[N - 1] = 1.0;
    let lu = Lu7::new(&a).ok_or_else(|| Error::NonUniqueSteadyState {
        components: "periodic state".into(),
    })?;
    let p = lu.solve(&b).map(|v| v.max(0.0));
    let s: f64 = p.iter().sum();
    Ok(Populations(p.map(|v| v / s)))
}

/// Contrast of NV⁻ PL under a square-wave IR drive between `n_high` and
/// `n_high·10^(−extinction_dB/10)` at angular frequency `omega_eom`.
///
/// The cavity is assumed to follow the modulation instantly. The periodic
/// state is started from the exact fixed point of the one-period map, then
/// propagated ⌈10·f/k_q⌉ + 5 periods (k_q the effective quartet decay rate)
/// before one period is sampled.
pub fn modulation_contrast(
    model: &KineticModel,
    green_power: f64,
    n_high: f64,
    extinction_db: f64,
    omega_eom: f64,
    opts: &ContrastOptions,
) -> Result<ContrastResult> {
    check_inputs(green_power, n_high, extinction_db)?;
    if !(omega_eom > 0.0) || !omega_eom.is_finite() {
        return Err(Error::domain("modulation frequency must be positive"));
    }
    if !(opts.duty > 0.0 && opts.duty < 1.0) || opts.samples_per_period < 2 {
        return Err(Error::domain("duty must be in (0, 1) with at least 2 samples per period"));
    }
    let n_low = low_level(n_high, extinction_db);
    let freq = omega_eom / core::f64::consts::TAU;
    let period = 1.0 / freq;
    let n_hi_steps = ((opts.samples_per_period as f64 * opts.duty).round() as usize).clamp(1, opts.samples_per_period - 1);
    let n_lo_steps = opts.samples_per_period - n_hi_steps;
    let dt_hi = opts.duty * period / n_hi_steps as f64;
    let dt_lo = (1.0 - opts.duty) * period / n_lo_steps as f64;

    let mut cache = PropagatorCache::new(model, green_power);
    let one_period = cache
        .get(n_high, opts.duty * period)
        .then(&cache.get(n_low, (1.0 - opts.duty) * period));
    let mut p = periodic_fixed_point(&one_period)?;

    let decay = effective_quartet_decay(model, green_power).max(f64::MIN_POSITIVE);
    let periods = (10.0 * freq / decay).ceil() as usize + 5;
    let pl = |p: &Populations| pl_observables(p, model).nv_minus;
    let mut previous = pl(&p);
    let mut change = 0.0;
    for _ in 0..periods {
        p = one_period.apply(&p);
        let now = pl(&p);
        change = (now - previous).abs() / now.abs().max(f64::MIN_POSITIVE);
        previous = now;
    }

    let step_hi = cache.get(n_high, dt_hi);
    let step_lo = cache.get(n_low, dt_lo);
    let (mut max, mut min) = (pl(&p), pl(&p));
    for k in 0..opts.samples_per_period {
        p = if k < n_hi_steps { step_hi.apply(&p) } else { step_lo.apply(&p) };
        let v = pl(&p);
        max = max.max(v);
        min = min.min(v);
    }
    if !(max > 0.0) {
        return Err(Error::domain("NV⁻ PL vanishes over the whole period"));
    }
    Ok(ContrastResult {
        contrast: (max - min) / max,
        pl_max: max,
        pl_min: min,
        periods,
        period_change: change,
        settled: change < opts.settle_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{pl_sweep, published_fit};

    fn model_1524() -> KineticModel {
        published_fit().model("1524nm").unwrap()
    }

    #[test]
    fn slow_modulation_matches_dc() {
        let m = model_1524();
        let dc = dc_contrast(&m, 4.1, 1e6, 25.0).unwrap();
        let slow = modulation_contrast(&m, 4.1, 1e6, 25.0, core::f64::consts::TAU * 10.0, &ContrastOptions::default()).unwrap();
        assert!(slow.settled);
        assert!((slow.contrast / dc - 1.0).abs() < 0.01, "{} vs {dc}", slow.contrast);
    }

    #[test]
    fn contrast_falls_with_frequency() {
        let m = model_1524();
        let opts = ContrastOptions::default();
        let c: alloc::vec::Vec<f64> = [1e4, 1e5, 5e5, 1e6, 1e7]
            .iter()
            .map(|f| modulation_contrast(&m, 4.1, 1e6, 25.0, core::f64::consts::TAU * f, &opts).unwrap().contrast)
            .collect();
        assert!(c.windows(2).all(|w| w[1] <= w[0]), "{c:?}");
    }

    #[test]
    fn infinite_extinction_limit() {
        // deep quench, no light in the off half: contrast → 1 − PL_norm(N_high)
        let m = model_1524();
        let n = 1e6;
        let dc = dc_contrast(&m, 4.1, n, 400.0).unwrap();
        let norm = pl_sweep(&m, 4.1, &[n]).unwrap()[0].pl_nvm_norm;
        assert!((dc - (1.0 - norm)).abs() < 1e-9);
        let slow = modulation_contrast(&m, 4.1, n, 400.0, core::f64::consts::TAU, &ContrastOptions::default()).unwrap();
        assert!((slow.contrast - (1.0 - norm)).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model_1524();
        let o = ContrastOptions::default();
        assert!(modulation_contrast(&m, 4.1, 1e6, 25.0, 0.0, &o).is_err());
        assert!(modulation_contrast(&m, 4.1, 1e6, -1.0, 1.0, &o).is_err());
        let bad = ContrastOptions { duty: 1.0, ..o };
        assert!(modulation_contrast(&m, 4.1, 1e6, 25.0, 1.0, &bad).is_err());
    }
}
