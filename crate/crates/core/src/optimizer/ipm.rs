//! Primal-dual interior-point method for `min f(x) s.t. A x ≤ b`.
//!
//! Inequalities get slacks `w = b − A x > 0` and multipliers `λ > 0`. Each
//! Newton step on the perturbed KKT system is condensed to
//! `(H + Aᵀ diag(λ/w) A) dx = rhs`, regularized until its Cholesky factor
//! exists. Steps keep `w, λ` inside the positive orthant and are accepted by
//! backtracking on an ℓ1 barrier merit function. The barrier parameter
//! follows the monotone Fiacco–McCormick rule.

use nalgebra::{DMatrix, DVector};

use super::problem::WindowProblem;
use super::OptimizerError;

#[derive(Debug, Clone)]
pub(crate) struct IpmOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

const MU_INIT: f64 = 0.1;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

struct Iterate {
    x: DVector<f64>,
    w: DVector<f64>,
    lambda: DVector<f64>,
}

struct Residuals {
    dual: DVector<f64>,
    primal: DVector<f64>,
}

fn residuals(it: &Iterate, grad: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Residuals {
    Residuals {
        dual: grad + a.tr_mul(&it.lambda),
        primal: a * &it.x + &it.w - b,
    }
}

/// Scaled optimality error of the barrier problem with parameter `mu`.
fn kkt_error(it: &Iterate, r: &Residuals, mu: f64) -> f64 {
    let m = it.w.len().max(1) as f64;
    let sd = (it.lambda.lp_norm(1) / m).max(S_MAX) / S_MAX;
    let comp =
        it.w.iter()
            .zip(it.lambda.iter())
            .map(|(w, l)| (w * l - mu).abs())
            .fold(0.0, f64::max);
    (r.dual.amax() / sd).max(r.primal.amax()).max(comp / sd)
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>, tau: f64) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -tau * v / d)
        .fold(1.0, f64::min)
}

fn merit(
    problem: &WindowProblem,
    x: &DVector<f64>,
    w: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    mu: f64,
    nu: f64,
) -> Result<f64, OptimizerError> {
    let barrier: f64 = w.iter().map(|v| v.ln()).sum();
    let infeasibility = (a * x + w - b).lp_norm(1);
    Ok(problem.value(x.as_slice())? - mu * barrier + nu * infeasibility)
}

pub(crate) fn solve(
    problem: &WindowProblem,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    opts: &IpmOptions,
) -> Result<IpmResult, OptimizerError> {
    let mut mu = MU_INIT;
    let w = (b - a * x0).map(|v| v.max(1e-2));
    let lambda = w.map(|v| mu / v);
    let mut it = Iterate {
        x: x0.clone(),
        w,
        lambda,
    };
    let mut nu: f64 = 1.0;
    let mut delta_last: f64 = 0.0;
    let mut kkt = f64::INFINITY;
    let mu_min = opts.tolerance / 10.0;

    for iteration in 0..opts.max_iterations {
        let (_, grad, hess) = problem.derivatives(it.x.as_slice())?;
        if !grad.iter().chain(hess.iter()).all(|v| v.is_finite()) {
            return Err(OptimizerError::Numerical("non-finite objective derivatives".into()));
        }
        let r = residuals(&it, &grad, a, b);
        kkt = kkt_error(&it, &r, 0.0);
        if kkt <= opts.tolerance {
            return Ok(IpmResult {
                x: it.x,
                iterations: iteration,
                converged: true,
                kkt_residual: kkt,
            });
        }
        while mu > mu_min && kkt_error(&it, &r, mu) <= KAPPA_EPS * mu {
            mu = mu_min.max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
        }

        let d = it.w.zip_map(&it.lambda, |w, l| l / w);
        let rc_over_w = it.w.zip_map(&it.lambda, |w, l| (w * l - mu) / w);
        let scaled_a = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| d[i] * a[(i, j)]);
        let reduced = &hess + a.tr_mul(&scaled_a);
        let rhs = -&r.dual - a.tr_mul(&(d.component_mul(&r.primal) - &rc_over_w));

        // regularize until positive definite, then step
        let mut delta: f64 = 0.0;
        let mut accepted = false;
        for _attempt in 0..60 {
            let mut m = reduced.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += delta;
            }
            let Some(chol) = m.cholesky() else {
                delta = if delta == 0.0 {
                    if delta_last == 0.0 {
                        1e-4
                    } else {
                        (delta_last / 3.0).max(1e-20)
                    }
                } else {
                    delta * 8.0
                };
                continue;
            };
            let dx = chol.solve(&rhs);
            let dw = -&r.primal - a * &dx;
            let dl = d.component_mul(&(a * &dx + &r.primal)) - &rc_over_w;

            let tau = (1.0 - mu).max(0.99);
            let alpha_max = max_step(&it.w, &dw, tau);
            let alpha_dual = max_step(&it.lambda, &dl, tau);
            nu = nu.max((&it.lambda + &dl).amax() + 1.0);

            let phi0 = merit(problem, &it.x, &it.w, a, b, mu, nu)?;
            let slope = grad.dot(&dx)
                - mu * dw.iter().zip(it.w.iter()).map(|(d, w)| d / w).sum::<f64>()
                - nu * r.primal.lp_norm(1);
            let mut alpha = alpha_max;
            for _ in 0..MAX_BACKTRACKS {
                let x = &it.x + alpha * &dx;
                let w = &it.w + alpha * &dw;
                let phi = merit(problem, &x, &w, a, b, mu, nu)?;
                let tol = 1e-12 * phi0.abs().max(1.0);
                if phi.is_finite() && phi <= phi0 + ARMIJO * alpha * slope.min(0.0) + tol {
                    it.x = x;
                    it.w = w;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                it.lambda += alpha_dual * &dl;
                for (l, w) in it.lambda.iter_mut().zip(it.w.iter()) {
                    *l = l.clamp(mu / (KAPPA_SIGMA * w), KAPPA_SIGMA * mu / w);
                }
                if delta > 0.0 {
                    delta_last = delta;
                }
                break;
            }
            // direction was poor; stiffen it
            delta = if delta == 0.0 { 1e-4 } else { delta * 8.0 };
        }
        if !accepted {
            log::debug!("interior point: no acceptable step at iteration {iteration}");
            return Ok(IpmResult {
                x: it.x,
                iterations: iteration + 1,
                converged: false,
                kkt_residual: kkt,
            });
        }
    }
    Ok(IpmResult {
        x: it.x,
        iterations: opts.max_iterations,
        converged: false,
        kkt_residual: kkt,
    })
}
