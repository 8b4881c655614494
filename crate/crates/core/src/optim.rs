//! Levenberg–Marquardt least squares with a finite-difference Jacobian.
//!
//! Each iteration solves the damped subproblem
//! `min ‖J·δ + r‖² + λ‖D·δ‖²` by QR of the stacked matrix `[J; √λ·D]`, so the
//! normal equations (and their squared condition number) are never formed.
//! A step is accepted only if it lowers the cost, hence the recorded cost
//! history is non-increasing.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{DenseMatrix, PivotedQr};

/// A vector-valued residual function.
pub trait Residuals {
    /// Number of residuals.
    fn len(&self) -> usize;

    /// Evaluates residuals at `x` into `out`. Returns `false` if the model
    /// cannot be evaluated there; the optimizer then treats the point as
    /// infinitely bad.
    fn eval(&self, x: &[f64], out: &mut [f64]) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost reduction below which an accepted step counts as converged.
    pub ftol: f64,
    /// Relative step size below which the iteration counts as converged.
    pub xtol: f64,
    /// Infinity norm of the scaled gradient for convergence.
    pub gtol: f64,
    /// Absolute cost below which the fit is exact to working precision.
    pub cost_floor: f64,
    pub initial_lambda: f64,
    /// Relative central-difference step for the Jacobian.
    pub jacobian_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            ftol: 1e-14,
            xtol: 1e-13,
            gtol: 1e-14,
            cost_floor: 1e-30,
            initial_lambda: 1e-3,
            jacobian_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    CostReduction,
    StepSize,
    Gradient,
    ExactFit,
    /// Damping grew without finding a better point.
    Stalled,
    MaxIterations,
    /// The residual function failed at the starting point.
    InvalidStart,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            Termination::CostReduction
                | Termination::StepSize
                | Termination::Gradient
                | Termination::ExactFit
        )
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: Vec<f64>,
    /// ½‖r‖² at `x`.
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// Jacobian at the returned point (absent if evaluation failed).
    pub jacobian: Option<DenseMatrix>,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        self.termination.is_converged()
    }
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Central-difference Jacobian. Falls back to one-sided differences where
/// the model cannot be evaluated on one side.
pub fn numeric_jacobian<R: Residuals + ?Sized>(
    problem: &R,
    x: &[f64],
    r0: &[f64],
    rel_step: f64,
) -> Option<DenseMatrix> {
    let m = problem.len();
    let n = x.len();
    let mut jac = DenseMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let ok_p = problem.eval(&xp, &mut rp);
        xp[j] = x[j] - h;
        let ok_m = problem.eval(&xp, &mut rm);
        xp[j] = x[j];
        let col = jac.column_mut(j);
        match (ok_p, ok_m) {
            (true, true) => col
                .iter_mut()
                .zip(rp.iter().zip(&rm))
                .for_each(|(c, (p, q))| *c = (p - q) / (2.0 * h)),
            (true, false) => col
                .iter_mut()
                .zip(rp.iter().zip(r0))
                .for_each(|(c, (p, q))| *c = (p - q) / h),
            (false, true) => col
                .iter_mut()
                .zip(r0.iter().zip(&rm))
                .for_each(|(c, (p, q))| *c = (p - q) / h),
            (false, false) => return None,
        }
    }
    Some(jac)
}

/// Minimises ½‖r(x)‖² from `x0`.
pub fn minimize<R: Residuals + ?Sized>(problem: &R, x0: &[f64], opts: &LmOptions) -> LmReport {
    let m = problem.len();
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    if !problem.eval(&x, &mut r) || r.iter().any(|v| !v.is_finite()) {
        return LmReport {
            x,
            cost: f64::INFINITY,
            residuals: r,
            iterations: 0,
            termination: Termination::InvalidStart,
            cost_history: Vec::new(),
            jacobian: None,
        };
    }
    let mut cost = cost_of(&r);
    let mut history = vec![cost];
    let mut lambda = opts.initial_lambda;
    let mut nu = 2.0;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut jac = numeric_jacobian(problem, &x, &r, opts.jacobian_step);

    'outer: while iterations < opts.max_iterations {
        if cost <= opts.cost_floor {
            termination = Termination::ExactFit;
            break;
        }
        let Some(j) = jac.as_ref() else {
            termination = Termination::Stalled;
            break;
        };
        iterations += 1;

        // column scaling D = diag(‖J_col‖)
        let scale: Vec<f64> = (0..n)
            .map(|c| {
                let s = j.column(c).iter().map(|v| v * v).sum::<f64>().sqrt();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        let grad = j.transpose_mul(&r);
        let gnorm = grad
            .iter()
            .zip(&scale)
            .map(|(g, s)| (g / s).abs())
            .fold(0.0, f64::max);
        if gnorm <= opts.gtol * (2.0 * cost).sqrt().max(f64::MIN_POSITIVE) {
            termination = Termination::Gradient;
            break;
        }

        loop {
            let mut aug = DenseMatrix::zeros(m + n, n);
            for c in 0..n {
                aug.column_mut(c)[..m].copy_from_slice(j.column(c));
                aug.set(m + c, c, lambda.sqrt() * scale[c]);
            }
            let mut rhs = vec![0.0; m + n];
            rhs[..m].iter_mut().zip(&r).for_each(|(d, v)| *d = -v);
            let step = PivotedQr::new(&aug).solve_least_squares(&rhs);
            let Some(step) = step else {
                termination = Termination::Stalled;
                break 'outer;
            };
            trial.iter_mut().zip(x.iter().zip(&step)).for_each(|(t, (a, b))| *t = a + b);
            let ok = problem.eval(&trial, &mut r_trial) && r_trial.iter().all(|v| v.is_finite());
            let new_cost = if ok { cost_of(&r_trial) } else { f64::INFINITY };

            if new_cost < cost {
                // gain ratio against the linear model
                let jd: Vec<f64> = (0..m)
                    .map(|i| (0..n).map(|c| j.get(i, c) * step[c]).sum::<f64>())
                    .collect();
                let predicted = cost
                    - 0.5 * r.iter().zip(&jd).map(|(a, b)| (a + b) * (a + b)).sum::<f64>();
                let rho = if predicted > 0.0 { (cost - new_cost) / predicted } else { 1.0 };
                lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;

                let reduction = cost - new_cost;
                let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                x.copy_from_slice(&trial);
                r.copy_from_slice(&r_trial);
                cost = new_cost;
                history.push(cost);
                jac = numeric_jacobian(problem, &x, &r, opts.jacobian_step);

                if cost <= opts.cost_floor {
                    termination = Termination::ExactFit;
                    break 'outer;
                }
                if reduction <= opts.ftol * cost {
                    termination = Termination::CostReduction;
                    break 'outer;
                }
                if step_norm <= opts.xtol * (x_norm + opts.xtol) {
                    termination = Termination::StepSize;
                    break 'outer;
                }
                continue 'outer;
            }

            // a rejected step this small means x is already a minimum to
            // working precision
            let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step_norm <= opts.xtol * (x_norm + opts.xtol) {
                termination = Termination::StepSize;
                break 'outer;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e20 {
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }

    LmReport {
        x,
        cost,
        residuals: r,
        iterations,
        termination,
        cost_history: history,
        jacobian: jac,
    }
}
