//! Time-domain propagation under piecewise-constant drive.
//!
//! Rates span roughly 1 kHz to 1 GHz, so explicit integrators would need
//! nanosecond steps. Each constant segment is instead advanced exactly with
//! `exp(G·Δt)`, computed once per distinct (N_IR, Δt) pair.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{assemble_generator, effective_rates, Drive, InstantRates, KineticModel, Populations};
use crate::linalg::{expm_generator7, matvec7, Mat7, N};
use crate::{Error, Result};

/// A stretch of constant IR photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    /// s
    pub duration: f64,
    pub n_ir: f64,
}

/// Piecewise-constant IR drive at fixed green power. After the last segment
/// the drive stays at that segment's level.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Waveform {
    /// mW
    pub green_power: f64,
    pub segments: Vec<Segment>,
}

impl Waveform {
    pub fn validate(&self) -> Result<()> {
        Drive::new(self.green_power, 0.0)?;
        if self.segments.is_empty() {
            return Err(Error::invalid("waveform has no segments"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(Error::domain(format!("segment {i}: duration must be > 0, got {}", s.duration)));
            }
            if !(s.n_ir >= 0.0) || !s.n_ir.is_finite() {
                return Err(Error::domain(format!("segment {i}: photon number must be >= 0, got {}", s.n_ir)));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Square wave starting with the high half: `n_high` for `duty·period`,
    /// then `n_low`, repeated `periods` times.
    pub fn square_wave(green_power: f64, n_high: f64, n_low: f64, period: f64, duty: f64, periods: usize) -> Result<Self> {
        if !(duty > 0.0 && duty < 1.0) {
            return Err(Error::domain(format!("duty cycle must be in (0, 1), got {duty}")));
        }
        let mut segments = Vec::with_capacity(2 * periods);
        for _ in 0..periods {
            segments.push(Segment { duration: duty * period, n_ir: n_high });
            segments.push(Segment { duration: (1.0 - duty) * period, n_ir: n_low });
        }
        let w = Waveform { green_power, segments };
        w.validate()?;
        Ok(w)
    }
}

/// exp(G·Δt), with each column corrected to sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator(Mat7);

impl Propagator {
    pub fn new(rates: &InstantRates, dt: f64) -> Self {
        Self::from_generator(&assemble_generator(rates).0, dt)
    }

    pub fn from_generator(g: &Mat7, dt: f64) -> Self {
        let mut m = expm_generator7(g, dt);
        // exp of a generator is column-stochastic; remove the roundoff so
        // that total probability does not drift over many segments
        for j in 0..N {
            let mut off = 0.0;
            for (i, row) in m.iter_mut().enumerate() {
                if i != j {
                    row[j] = row[j].max(0.0);
                    off += row[j];
                }
            }
            m[j][j] = (1.0 - off).max(0.0);
        }
        Propagator(m)
    }

    pub fn matrix(&self) -> &Mat7 {
        &self.0
    }

    pub fn apply(&self, p: &Populations) -> Populations {
        Populations(matvec7(&self.0, &p.0))
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Propagator) -> Propagator {
        Propagator(crate::linalg::matmul7(&next.0, &self.0))
    }
}

/// Propagators keyed by the exact bits of (N_IR, Δt).
pub(crate) struct PropagatorCache<'a> {
    model: &'a KineticModel,
    green_power: f64,
    map: BTreeMap<(u64, u64), Propagator>,
}

impl<'a> PropagatorCache<'a> {
    pub(crate) fn new(model: &'a KineticModel, green_power: f64) -> Self {
        PropagatorCache {
            model,
            green_power,
            map: BTreeMap::new(),
        }
    }

    pub(crate) fn get(&mut self, n_ir: f64, dt: f64) -> Propagator {
        let (model, green_power) = (self.model, self.green_power);
        *self.map.entry((n_ir.to_bits(), dt.to_bits())).or_insert_with(|| {
            Propagator::new(&effective_rates(model, Drive { green_power, n_ir }), dt)
        })
    }
}

/// Populations at each of `sample_times` (s, non-decreasing, from t = 0).
pub fn propagate(model: &KineticModel, waveform: &Waveform, p0: &Populations, sample_times: &[f64]) -> Result<Vec<Populations>> {
    waveform.validate()?;
    Populations::new(p0.0)?;
    if sample_times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::domain("sample times must be finite and >= 0"));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("sample times must be non-decreasing"));
    }

    let mut cache = PropagatorCache::new(model, waveform.green_power);
    let segs = &waveform.segments;
    let last = segs.len() - 1;
    let mut k = 0;
    let mut seg_end = segs[0].duration;
    let mut t = 0.0;
    let mut p = *p0;
    let mut out = Vec::with_capacity(sample_times.len());
    for &ts in sample_times {
        while t < ts {
            let end = if k == last { f64::INFINITY } else { seg_end };
            let step_to = ts.min(end);
            p = cache.get(segs[k].n_ir, step_to - t).apply(&p);
            t = step_to;
            if t >= end {
                k += 1;
                seg_end += segs[k].duration;
            }
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{published_fit, steady_state, Level};
    use alloc::vec;

    fn model() -> KineticModel {
        published_fit().model("966nm").unwrap()
    }

    // Independent oracle: adaptive Dormand–Prince RK45 on ṗ = G·p.
    fn rk45(g: &Mat7, p0: &[f64; N], t_end: f64, tol: f64) -> [f64; N] {
        let f = |p: &[f64; N]| matvec7(g, p);
        let a: [&[f64]; 7] = [
            &[],
            &[0.2],
            &[3.0 / 40.0, 9.0 / 40.0],
            &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
            &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
            &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
            &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        let b5 = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        let b4 = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        let mut p = *p0;
        let mut t: f64 = 0.0;
        let mut h: f64 = 1e-12;
        while t < t_end {
            h = h.min(t_end - t);
            let mut k = [[0.0; N]; 7];
            for s in 0..7 {
                let mut y = p;
                for (j, aj) in a[s].iter().enumerate() {
                    for i in 0..N {
                        y[i] += h * aj * k[j][i];
                    }
                }
                k[s] = f(&y);
            }
            let mut y5 = p;
            let mut err: f64 = 0.0;
            for i in 0..N {
                let (mut d5, mut d4) = (0.0, 0.0);
                for s in 0..7 {
                    d5 += b5[s] * k[s][i];
                    d4 += b4[s] * k[s][i];
                }
                y5[i] += h * d5;
                err = err.max((h * (d5 - d4)).abs());
            }
            if err <= tol {
                p = y5;
                t += h;
            }
            h *= (0.9 * (tol / err.max(1e-300)).powf(0.2)).clamp(0.2, 5.0);
        }
        p
    }

    #[test]
    fn step_response_matches_rk45() {
        let m = model();
        let p0 = steady_state(&m, Drive { green_power: 2.0, n_ir: 0.0 }).unwrap();
        let w = Waveform {
            green_power: 2.0,
            segments: vec![Segment { duration: 1.0, n_ir: 3e3 }],
        };
        let times = [1e-7, 1e-6, 1e-5, 5e-5];
        let traj = propagate(&m, &w, &p0, &times).unwrap();
        let g = assemble_generator(&effective_rates(&m, Drive { green_power: 2.0, n_ir: 3e3 })).0;
        for (t, p) in times.iter().zip(&traj) {
            let o = rk45(&g, &p0.0, *t, 1e-13);
            for (a, b) in p.0.iter().zip(&o) {
                assert!((a - b).abs() < 1e-8, "t={t}: {:?} vs {:?}", p.0, o);
            }
        }
    }

    #[test]
    fn step_response_approaches_new_steady_state_monotonically() {
        let m = model();
        let p0 = steady_state(&m, Drive { green_power: 4.6, n_ir: 0.0 }).unwrap();
        let target = steady_state(&m, Drive { green_power: 4.6, n_ir: 1e3 }).unwrap();
        let w = Waveform {
            green_power: 4.6,
            segments: vec![Segment { duration: 1.0, n_ir: 1e3 }],
        };
        let times: Vec<f64> = (0..60).map(|i| 1e-6 * 1.25f64.powi(i)).collect();
        let traj = propagate(&m, &w, &p0, &times).unwrap();
        let tv: Vec<f64> = traj
            .iter()
            .map(|p| p.0.iter().zip(&target.0).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .collect();
        // after the fast optical transients (> 10 µs) the distance only shrinks
        let settled: Vec<f64> = tv.iter().zip(&times).filter(|(_, t)| **t > 1e-5).map(|(d, _)| *d).collect();
        assert!(settled.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{settled:?}");
        assert!(*tv.last().unwrap() < 1e-9);
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let m = model();
        let p = steady_state(&m, Drive { green_power: 4.6, n_ir: 500.0 }).unwrap();
        let w = Waveform {
            green_power: 4.6,
            segments: vec![Segment { duration: 1e-3, n_ir: 500.0 }],
        };
        let times: Vec<f64> = (1..50).map(|i| i as f64 * 3.7e-6).collect();
        for q in propagate(&m, &w, &p, &times).unwrap() {
            for (a, b) in q.0.iter().zip(&p.0) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn holds_last_segment_and_conserves() {
        let m = model();
        let w = Waveform::square_wave(1.0, 2e4, 10.0, 1e-5, 0.5, 3).unwrap();
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 2e-7).collect();
        let traj = propagate(&m, &w, &Populations::pure(Level::NvMinusGround), &times).unwrap();
        assert_eq!(traj[0], Populations::pure(Level::NvMinusGround));
        for p in &traj {
            assert!((p.sum() - 1.0).abs() < 1e-12);
            assert!(p.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn invalid_waveforms_rejected() {
        let m = model();
        let p = Populations::pure(Level::NvMinusGround);
        let bad = Waveform {
            green_power: 1.0,
            segments: vec![Segment { duration: 0.0, n_ir: 1.0 }],
        };
        assert!(propagate(&m, &bad, &p, &[0.0]).is_err());
        let ok = Waveform {
            green_power: 1.0,
            segments: vec![Segment { duration: 1.0, n_ir: 1.0 }],
        };
        assert!(propagate(&m, &ok, &p, &[1.0, 0.5]).is_err());
        assert!(Waveform::square_wave(1.0, 1.0, 0.0, 1.0, 1.0, 1).is_err());
    }
}
