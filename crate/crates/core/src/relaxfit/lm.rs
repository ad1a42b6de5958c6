//! Levenberg–Marquardt nonlinear least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmOptions {
    pub lambda0: f64,
    pub lambda_max: f64,
    pub max_iter: usize,
    /// Converged when two consecutive accepted steps each change RSS by
    /// less than this fraction.
    pub rss_rel_tol: f64,
    /// Converged when ‖δ‖ ≤ `step_tol`·(‖p‖ + `step_tol`).
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            lambda0: 1e-3,
            lambda_max: 1e10,
            max_iter: 200,
            rss_rel_tol: 1e-10,
            step_tol: 1e-12,
        }
    }
}

/// Outcome of a least-squares fit. `params` are in the solver's
/// parameterisation for [`lm_solve`] and in natural units for the model fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
    /// RSS at the start point followed by the RSS after each accepted step.
    pub rss_trace: Vec<f64>,
    /// Why the fit was abandoned, when it was.
    pub failure: Option<String>,
}

impl FitResult {
    pub(crate) fn flagged(n_params: usize, reason: impl Into<String>) -> Self {
        FitResult {
            params: vec![f64::NAN; n_params],
            rss: f64::NAN,
            iterations: 0,
            converged: false,
            lambda: f64::NAN,
            rss_trace: Vec::new(),
            failure: Some(reason.into()),
        }
    }
}

/// A model evaluated at parameters `p`: writes predictions into `f`
/// (length m) and the row-major m×n Jacobian ∂f/∂p into `jac`.
pub trait Model {
    fn eval(&self, p: &[f64], f: &mut [f64], jac: &mut [f64]);
}

impl<F: Fn(&[f64], &mut [f64], &mut [f64])> Model for F {
    fn eval(&self, p: &[f64], f: &mut [f64], jac: &mut [f64]) {
        self(p, f, jac)
    }
}

fn residuals(model: &dyn Model, y: &[f64], p: &[f64], f: &mut [f64], jac: &mut [f64]) -> (Vec<f64>, f64) {
    model.eval(p, f, jac);
    let r: Vec<f64> = y.iter().zip(f.iter()).map(|(y, f)| y - f).collect();
    let rss = r.iter().map(|v| v * v).sum();
    (r, rss)
}

/// Minimises Σ(y − f(p))² from `p0` by solving the damped normal equations
/// `(JᵀJ + λ·diag(JᵀJ)) δ = Jᵀr`. A step is accepted when RSS drops
/// (λ ← λ/10), otherwise rejected (λ ← λ·10); once λ exceeds
/// `lambda_max` the fit is reported as non-converged.
pub fn lm_solve(model: &dyn Model, y: &[f64], p0: &[f64], opts: &LmOptions) -> Result<FitResult> {
    let (m, n) = (y.len(), p0.len());
    if n == 0 || m < n {
        return Err(Error::input(format!(
            "{m} observations cannot determine {n} parameters"
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("observation {i} is not finite")));
    }
    if p0.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("initial parameters are not finite"));
    }
    let y_scale: f64 = y.iter().map(|v| v * v).sum();
    let negligible = |rss: f64| rss <= (f64::EPSILON * f64::EPSILON) * y_scale.max(f64::MIN_POSITIVE);

    let mut p = p0.to_vec();
    let mut f = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    let (mut r, mut rss) = residuals(model, y, &p, &mut f, &mut jac);
    if !rss.is_finite() {
        return Ok(FitResult::flagged(n, "model is not finite at the start point"));
    }
    let mut result = FitResult {
        params: p.clone(),
        rss,
        iterations: 0,
        converged: negligible(rss),
        lambda: opts.lambda0,
        rss_trace: vec![rss],
        failure: None,
    };
    if result.converged {
        return Ok(result);
    }
    let mut lambda = opts.lambda0;
    let mut small_before = false;
    let mut f_try = vec![0.0; m];
    let mut jac_try = vec![0.0; m * n];
    while result.iterations < opts.max_iter {
        result.iterations += 1;
        let jm = DMatrix::from_row_slice(m, n, &jac);
        let a = jm.transpose() * &jm;
        let g = jm.transpose() * DVector::from_column_slice(&r);
        let dmax = (0..n).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
        let floor = (dmax * 1e-15).max(f64::MIN_POSITIVE);
        loop {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * a[(i, i)].max(floor);
            }
            let step = damped.cholesky().map(|c| c.solve(&g));
            let accepted = match step {
                Some(delta) if delta.iter().all(|v| v.is_finite()) => {
                    let p_try: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
                    let (r_try, rss_try) = residuals(model, y, &p_try, &mut f_try, &mut jac_try);
                    let dnorm = delta.norm();
                    let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let tiny_step = dnorm <= opts.step_tol * (pnorm + opts.step_tol);
                    // RSS change as Σ(r'−r)(r'+r): exact to rounding of the
                    // residual differences, so decreases far below the
                    // resolution of the RSS itself are still recognised.
                    let change: f64 = r_try.iter().zip(&r).map(|(a, b)| (a - b) * (a + b)).sum();
                    if rss_try.is_finite() && change < 0.0 {
                        let rel = -change / rss;
                        p = p_try;
                        r = r_try;
                        rss = (rss + change).max(0.0);
                        std::mem::swap(&mut jac, &mut jac_try);
                        lambda = (lambda / 10.0).max(1e-300);
                        result.rss_trace.push(rss);
                        // The RSS test must hold on two consecutive accepted
                        // steps: the first small change can still come from a
                        // damped step that has not fully settled.
                        let small = rel < opts.rss_rel_tol;
                        if (small && small_before) || tiny_step || negligible(rss) {
                            result.converged = true;
                        }
                        small_before = small;
                        true
                    } else if rss_try.is_finite() && (tiny_step || change.abs() <= opts.rss_rel_tol * rss) {
                        // No representable improvement left: p is a minimiser
                        // to working precision. A step whose RSS change lies
                        // within the rounding noise of the residuals is still
                        // taken, since it is as good as p and refines it.
                        let noise: f64 = 4.0
                            * f64::EPSILON
                            * y.iter()
                                .zip(&r)
                                .zip(&r_try)
                                .map(|((yv, a), b)| (2.0 * yv.abs() + a.abs()) * (a + b).abs())
                                .sum::<f64>();
                        if change <= noise {
                            p = p_try;
                            r = r_try;
                            rss = rss.min(rss_try);
                            std::mem::swap(&mut jac, &mut jac_try);
                        }
                        result.converged = true;
                        true
                    } else {
                        false
                    }
                }
                _ => false,
            };
            if accepted {
                break;
            }
            lambda *= 10.0;
            if lambda > opts.lambda_max {
                result.params = p;
                result.rss = rss;
                result.lambda = lambda;
                result.failure = Some(format!("damping exceeded {:e}", opts.lambda_max));
                return Ok(result);
            }
        }
        if result.converged {
            break;
        }
    }
    if !result.converged {
        result.failure = Some(format!("no convergence within {} iterations", opts.max_iter));
    }
    result.params = p;
    result.rss = rss;
    result.lambda = lambda;
    Ok(result)
}
