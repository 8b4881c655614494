use nvcav_core::kinetics::{
    dc_contrast, modulation_contrast, pl_observables, pl_sweep, propagate, steady_state, ContrastOptions, Drive,
    KineticModel, PlObservables, Populations, Waveform,
};
use nvcav_core::Error as CoreError;

use super::{coefficients, load_config, output, ConfigArgs};
use crate::error::{CliError, Result};
use crate::formats::{self, CONTRAST_COLUMNS};
use crate::provenance::{num, Provenance};

fn population_cells(p: &Populations) -> impl Iterator<Item = String> + '_ {
    p.0.iter().map(|&v| num(v))
}

pub fn sweep(a: &ConfigArgs) -> Result<()> {
    let mut prov = Provenance::new("sweep");
    let cfg = load_config(a.config.as_deref(), &mut prov)?;
    let s = cfg.section(&cfg.sweep, "sweep")?;
    let model = coefficients(&cfg, &mut prov)?.model(&s.ir_label)?;
    // the normalization anchor must exist before any row can be computed
    pl_sweep(&model, s.green_power_mW, &[0.0])?;
    let mut rows = Vec::new();
    let mut flagged = 0;
    for n in s.n_ir.values()? {
        let mut row = vec![num(n)];
        match pl_sweep(&model, s.green_power_mW, &[n]) {
            Ok(pts) => {
                let p = &pts[0];
                row.extend(population_cells(&p.populations));
                row.extend([num(p.pl_nvm_norm), num(p.pl_nv0_norm), String::new()]);
            }
            Err(CoreError::NonUniqueSteadyState { .. }) => {
                flagged += 1;
                row.extend(std::iter::repeat_n(num(f64::NAN), 9));
                row.push("non_unique_steady_state".into());
            }
            Err(e) => return Err(e.into()),
        }
        rows.push(row);
    }
    let body = formats::write_table(&prov, &formats::sweep_header(), &rows)?;
    output(&a.output, &s.output).write(&body)?;
    if flagged > 0 {
        return Err(CliError::degenerate(format!("steady state is not unique at {flagged} grid point(s); rows flagged")));
    }
    Ok(())
}

fn reference_pl(model: &KineticModel, green_power: f64) -> Result<PlObservables> {
    let r = pl_observables(&steady_state(model, Drive::new(green_power, 0.0)?)?, model);
    if !(r.nv_minus > 0.0 && r.nv_zero > 0.0) {
        return Err(CliError::degenerate("PL without IR vanishes; cannot normalize"));
    }
    Ok(r)
}

pub fn timedomain(a: &ConfigArgs) -> Result<()> {
    let mut prov = Provenance::new("timedomain");
    let cfg = load_config(a.config.as_deref(), &mut prov)?;
    let s = cfg.section(&cfg.timedomain, "timedomain")?;
    let model = coefficients(&cfg, &mut prov)?.model(&s.ir_label)?;
    if !(s.eom_frequency_Hz > 0.0) || !s.eom_frequency_Hz.is_finite() {
        return Err(CliError::input("eom_frequency_Hz must be positive"));
    }
    if s.periods == 0 || s.samples_per_period < 2 {
        return Err(CliError::input("need at least one period and two samples per period"));
    }
    if !(s.extinction_dB >= 0.0) {
        return Err(CliError::input("extinction_dB must be >= 0"));
    }
    let period = 1.0 / s.eom_frequency_Hz;
    let n_low = s.n_high * 10f64.powf(-s.extinction_dB / 10.0);
    let wave = Waveform::square_wave(s.green_power_mW, s.n_high, n_low, period, s.duty, s.periods)?;
    let reference = reference_pl(&model, s.green_power_mW)?;
    // the drive sat at the low level before the modulation started
    let p0 = steady_state(&model, Drive::new(s.green_power_mW, n_low)?)?;
    let m = s.samples_per_period;
    let times: Vec<f64> = (0..s.periods * m).map(|i| (i / m) as f64 * period + (i % m) as f64 * period / m as f64).collect();
    let states = propagate(&model, &wave, &p0, &times)?;
    let pl: Vec<PlObservables> = states.iter().map(|p| pl_observables(p, &model)).collect();

    let mut settled = vec![false; s.periods];
    let mut last_change = f64::INFINITY;
    for k in 1..s.periods {
        let cur = &pl[k * m..(k + 1) * m];
        let prev = &pl[(k - 1) * m..k * m];
        let scale = cur.iter().map(|x| x.nv_minus).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        last_change = cur.iter().zip(prev).map(|(a, b)| (a.nv_minus - b.nv_minus).abs()).fold(0.0, f64::max) / scale;
        settled[k] = last_change <= s.settle_tol;
    }
    let rows: Vec<Vec<String>> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let phase = (i % m) as f64 / m as f64;
            let n = if phase < s.duty { s.n_high } else { n_low };
            let mut row = vec![num(t), num(n)];
            row.extend(population_cells(&states[i]));
            row.push(num(pl[i].nv_minus / reference.nv_minus));
            row.push(num(pl[i].nv_zero / reference.nv_zero));
            row.push(if settled[i / m] { "1" } else { "0" }.into());
            row
        })
        .collect();
    let body = formats::write_table(&prov, &formats::trace_header(), &rows)?;
    output(&a.output, &s.output).write(&body)?;
    if !settled[s.periods - 1] {
        eprintln!("warning: periodic state not settled after {} periods (last change {last_change:e})", s.periods);
    }
    Ok(())
}

pub fn contrast(a: &ConfigArgs) -> Result<()> {
    let mut prov = Provenance::new("contrast");
    let cfg = load_config(a.config.as_deref(), &mut prov)?;
    let s = cfg.section(&cfg.contrast, "contrast")?;
    let model = coefficients(&cfg, &mut prov)?.model(&s.ir_label)?;
    let opts = ContrastOptions { duty: s.duty, samples_per_period: s.samples_per_period, settle_tol: s.settle_tol };
    let dc = dc_contrast(&model, s.green_power_mW, s.n_high, s.extinction_dB)?;
    let mut rows = Vec::new();
    let mut unsettled = 0;
    for f in s.eom_frequency_Hz.values()? {
        let r = modulation_contrast(&model, s.green_power_mW, s.n_high, s.extinction_dB, std::f64::consts::TAU * f, &opts)?;
        unsettled += usize::from(!r.settled);
        rows.push(vec![
            num(f),
            num(r.contrast),
            num(r.pl_max),
            num(r.pl_min),
            r.periods.to_string(),
            num(r.period_change),
            if r.settled { "1" } else { "0" }.into(),
            num(dc),
        ]);
    }
    let body = formats::write_table(&prov, &CONTRAST_COLUMNS, &rows)?;
    output(&a.output, &s.output).write(&body)?;
    if unsettled > 0 {
        eprintln!("warning: {unsettled} frequency row(s) did not settle; see the 'settled' column");
    }
    Ok(())
}
