//! Small dense nonlinear least squares.
//!
//! Levenberg-Marquardt with Nielsen's damping update and central-difference
//! Jacobians.  The fits in this crate have at most a handful of parameters
//! and a few dozen residuals, so everything is dense and allocation cost is
//! irrelevant; what matters is robustness to poor starting points, which the
//! damping schedule plus caller-side multi-starts provide.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Stop when the max-norm of the gradient J'r drops below this.
    pub grad_tol: f64,
    /// Stop when the step is this small relative to the parameter norm.
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 300,
            grad_tol: 1e-11,
            step_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: DVector<f64>,
    pub residual_norm_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn jacobian_central<F: Fn(&DVector<f64>) -> DVector<f64>>(
    f: &F,
    x: &DVector<f64>,
    m: usize,
) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1e-4);
        xp[j] = x[j] + h;
        let rp = f(&xp);
        xp[j] = x[j] - h;
        let rm = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimise `|residual(x)|²` starting from `x0`.
///
/// `residual` must always return a vector of the same length with finite
/// entries for finite input; parameter transforms (for positivity etc.)
/// are the caller's job.
pub fn levenberg_marquardt<F: Fn(&DVector<f64>) -> DVector<f64>>(
    residual: F,
    x0: DVector<f64>,
    opts: &LmOptions,
) -> Result<LmFit> {
    let mut x = x0;
    let mut r = residual(&x);
    let m = r.len();
    if m < x.len() {
        return Err(Error::Config(format!(
            "{} residuals cannot determine {} parameters",
            m,
            x.len()
        )));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("residual not finite at the start point".into()));
    }
    let mut cost = r.norm_squared();
    let mut jac = jacobian_central(&residual, &x, m);
    let mut a = jac.tr_mul(&jac);
    let mut g = jac.tr_mul(&r);

    let mut mu = 1e-3 * (0..x.len()).map(|i| a[(i, i)]).fold(0.0f64, f64::max).max(1e-30);
    let mut nu = 2.0;
    let mut converged = g.amax() <= opts.grad_tol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let mut damped = a.clone();
        for i in 0..x.len() {
            damped[(i, i)] += mu;
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        if step.norm() <= opts.step_tol * (x.norm() + opts.step_tol) {
            converged = true;
            break;
        }
        let x_new = &x + &step;
        let r_new = residual(&x_new);
        let cost_new = if r_new.iter().all(|v| v.is_finite()) {
            r_new.norm_squared()
        } else {
            f64::INFINITY
        };
        // Gain ratio: actual cost drop over the drop predicted by the
        // damped quadratic model.
        let predicted = 0.5 * step.dot(&(mu * &step - &g));
        let rho = if predicted > 0.0 {
            0.5 * (cost - cost_new) / predicted
        } else {
            -1.0
        };
        if rho > 0.0 {
            x = x_new;
            r = r_new;
            cost = cost_new;
            jac = jacobian_central(&residual, &x, m);
            a = jac.tr_mul(&jac);
            g = jac.tr_mul(&r);
            let shrink = (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            mu *= shrink;
            nu = 2.0;
            converged = g.amax() <= opts.grad_tol;
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                break;
            }
        }
    }

    Ok(LmFit {
        params: x,
        residual_norm_sq: cost,
        iterations,
        converged,
    })
}
