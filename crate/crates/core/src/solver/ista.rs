//! Iterative soft thresholding for the Lasso
//! `min_x |m - A x|^2 / 2 + lambda |x|_1`.

use super::{SolverOptions, SolverResult, StopReason};
use crate::error::{Error, Result};
use crate::linops::{norm, op_norm_estimate, LinearOperator};

pub fn soft_threshold(x: &[f64], t: f64) -> Vec<f64> {
    x.iter()
        .map(|&v| v.signum() * (v.abs() - t).max(0.0))
        .map(|v| if v == 0.0 { 0.0 } else { v })
        .collect()
}

pub fn lasso_cost(op: &dyn LinearOperator, m: &[f64], x: &[f64], lambda: f64) -> f64 {
    let r: f64 = op
        .forward(x)
        .iter()
        .zip(m)
        .map(|(a, b)| (b - a).powi(2))
        .sum();
    0.5 * r + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// `z_k = m - A x_k`, `x_{k+1} = soft(x_k + tau A^T z_k, tau lambda)`,
/// from `x_0 = 0`. The step is `opts.tau0`, defaulting to `1 / |A|^2`; the
/// line-search mode is ignored.
pub fn ista_solve(
    op: &dyn LinearOperator,
    m: &[f64],
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    opts.validate()?;
    if m.len() != op.rows() {
        return Err(Error::invalid(format!(
            "measurement length {} does not match operator rows {}",
            m.len(),
            op.rows()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let tau = opts.tau0.unwrap_or_else(|| {
        let n = op_norm_estimate(op, 20, 0);
        if n > 0.0 {
            1.0 / (n * n)
        } else {
            1.0
        }
    });
    let mut x = vec![0.0; op.cols()];
    let mut cost_history = vec![lasso_cost(op, m, &x, lambda)];
    let mut tau_history = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;
    for k in 1..=opts.max_iters {
        let z: Vec<f64> = op.forward(&x).iter().zip(m).map(|(a, b)| b - a).collect();
        let back = op.adjoint(&z);
        let step: Vec<f64> = x.iter().zip(&back).map(|(a, b)| a + tau * b).collect();
        let x_new = soft_threshold(&step, tau * lambda);
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: k });
        }
        let change: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let base = norm(&x);
        let rel = if base > 0.0 { norm(&change) / base } else { norm(&change) };
        x = x_new;
        tau_history.push(tau);
        cost_history.push(lasso_cost(op, m, &x, lambda));
        if rel < opts.rel_tol {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    let iterations = tau_history.len();
    Ok(SolverResult {
        estimate: x,
        cost_history,
        tau_history,
        iterations,
        converged: stop_reason == StopReason::Converged,
        stop_reason,
    })
}
