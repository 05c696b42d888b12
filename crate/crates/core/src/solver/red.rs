//! Regularization by denoising: `R(s) = s^T (s - D(s))`, solved for
//! `min_s |A s - y|^2 + lambda R(s)` by forward-backward splitting.

use super::fbs::{fbs_solve, CompositeProblem};
use super::{SolverOptions, SolverResult};
use crate::denoiser::DenoiserHandle;
use crate::error::{Error, Result};
use crate::linops::{dot, op_norm_estimate, LinearOperator};
use crate::signal::SeismicSection;

/// Power iterations used for the default initial step.
const NORM_ESTIMATE_ITERS: usize = 20;

#[derive(Debug, Clone)]
pub struct RedContext {
    pub denoiser: DenoiserHandle,
    pub lambda: f64,
    /// `(n_channels, n_time)` of the sections the vectors represent.
    pub shape: (usize, usize),
}

impl RedContext {
    pub fn new(denoiser: DenoiserHandle, lambda: f64, shape: (usize, usize)) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            denoiser,
            lambda,
            shape,
        })
    }

    fn apply_denoiser(&self, s: &[f64]) -> Result<Vec<f64>> {
        let section = SeismicSection::from_vector(self.shape.0, self.shape.1, s.to_vec())?;
        Ok(self.denoiser.denoise(&section)?.into_vector())
    }
}

/// `s^T (s - D(s))`.
pub fn red_value(s: &[f64], ctx: &RedContext) -> Result<f64> {
    if ctx.denoiser.is_null() {
        return Ok(0.0);
    }
    let d = ctx.apply_denoiser(s)?;
    Ok(s.iter().zip(&d).map(|(a, b)| a * (a - b)).sum())
}

/// `2 (s - D(s))`, the RED gradient for locally homogeneous denoisers with
/// symmetric Jacobian.
pub fn red_gradient(s: &[f64], ctx: &RedContext) -> Result<Vec<f64>> {
    if ctx.denoiser.is_null() {
        return Ok(vec![0.0; s.len()]);
    }
    let d = ctx.apply_denoiser(s)?;
    Ok(s.iter().zip(&d).map(|(a, b)| 2.0 * (a - b)).collect())
}

/// One fixed-point pass for `argmin_s tau lambda R(s) + |s - s_hat|^2 / 2`,
/// started at `s_hat`: `(s_hat + 2 tau lambda D(s_hat)) / (1 + 2 tau lambda)`.
pub fn prox_red_single_step(s_hat: &[f64], ctx: &RedContext, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    let w = 2.0 * tau * ctx.lambda;
    if w == 0.0 || ctx.denoiser.is_null() {
        return Ok(s_hat.to_vec());
    }
    let d = ctx.apply_denoiser(s_hat)?;
    Ok(s_hat
        .iter()
        .zip(&d)
        .map(|(a, b)| (a + w * b) / (1.0 + w))
        .collect())
}

/// `|A s - y|^2 + lambda s^T (s - D(s))` as a composite problem.
pub struct RedLeastSquares<'a> {
    pub op: &'a dyn LinearOperator,
    pub y: &'a [f64],
    pub ctx: &'a RedContext,
}

impl CompositeProblem for RedLeastSquares<'_> {
    fn smooth(&self, s: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r: Vec<f64> = self
            .op
            .forward(s)
            .iter()
            .zip(self.y)
            .map(|(a, b)| a - b)
            .collect();
        let g = self.op.adjoint(&r).into_iter().map(|v| 2.0 * v).collect();
        Ok((dot(&r, &r), g))
    }

    fn prox(&self, z: &[f64], tau: f64) -> Result<Vec<f64>> {
        prox_red_single_step(z, self.ctx, tau)
    }

    fn cost(&self, s: &[f64]) -> Result<f64> {
        let (f, _) = self.smooth(s)?;
        self.cost_given_smooth(s, f)
    }

    fn cost_given_smooth(&self, s: &[f64], f: f64) -> Result<f64> {
        if self.ctx.lambda == 0.0 {
            return Ok(f);
        }
        Ok(f + self.ctx.lambda * red_value(s, self.ctx)?)
    }
}

/// Deep-RED solve started from the adjoint image `A^T y`.
pub fn deep_red_solve(
    op: &dyn LinearOperator,
    y: &[f64],
    ctx: &RedContext,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let s0 = op.adjoint(y);
    deep_red_solve_from(op, y, ctx, opts, &s0)
}

/// Deep-RED solve from an explicit start point. Without `opts.tau0` the
/// initial step is `1 / |A|^2` with `|A|` from power iteration.
pub fn deep_red_solve_from(
    op: &dyn LinearOperator,
    y: &[f64],
    ctx: &RedContext,
    opts: &SolverOptions,
    s0: &[f64],
) -> Result<SolverResult> {
    if y.len() != op.rows() || s0.len() != op.cols() {
        return Err(Error::invalid(format!(
            "operator is {}x{}, got y of length {} and s0 of length {}",
            op.rows(),
            op.cols(),
            y.len(),
            s0.len()
        )));
    }
    if ctx.shape.0 * ctx.shape.1 != op.cols() {
        return Err(Error::invalid(format!(
            "section shape {:?} does not match operator input dimension {}",
            ctx.shape,
            op.cols()
        )));
    }
    let mut opts = *opts;
    if opts.tau0.is_none() {
        let n = op_norm_estimate(op, NORM_ESTIMATE_ITERS, 0);
        opts.tau0 = Some(if n > 0.0 { 1.0 / (n * n) } else { 1.0 });
    }
    let problem = RedLeastSquares { op, y, ctx };
    fbs_solve(&problem, s0, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::Identity;
    use crate::rng;

    fn ctx(d: DenoiserHandle, lambda: f64, shape: (usize, usize)) -> RedContext {
        RedContext::new(d, lambda, shape).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::from_seed(seed);
        (0..n).map(|_| rng::standard_normal(&mut r)).collect()
    }

    #[test]
    fn null_denoiser_has_zero_regularizer() {
        let c = ctx(DenoiserHandle::null(), 1.0, (4, 4));
        let s = random_vec(16, 1);
        assert_eq!(red_value(&s, &c).unwrap(), 0.0);
        assert!(red_gradient(&s, &c).unwrap().iter().all(|&v| v == 0.0));
        let b = ctx(DenoiserHandle::default_blur(), 1.0, (4, 4));
        assert_eq!(red_value(&[0.0; 16], &b).unwrap(), 0.0);
    }

    #[test]
    fn blur_value_matches_explicit_inner_product() {
        let blur = DenoiserHandle::default_blur();
        let c = ctx(blur.clone(), 1.0, (8, 6));
        let s = random_vec(48, 2);
        let sec = SeismicSection::from_vector(8, 6, s.clone()).unwrap();
        let d = blur.denoise(&sec).unwrap();
        let expected: f64 = s.iter().zip(d.samples()).map(|(a, b)| a * a - a * b).sum();
        assert!((red_value(&s, &c).unwrap() - expected).abs() <= 1e-10);
    }

    #[test]
    fn clean_fixed_point_has_zero_gradient() {
        let c = ctx(DenoiserHandle::default_blur(), 1.0, (5, 5));
        let g = red_gradient(&[1.5; 25], &c).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn prox_examples() {
        let s = random_vec(9, 3);
        let c0 = ctx(DenoiserHandle::default_blur(), 0.0, (3, 3));
        assert_eq!(prox_red_single_step(&s, &c0, 0.7).unwrap(), s);
        let cn = ctx(DenoiserHandle::null(), 2.0, (3, 3));
        assert_eq!(prox_red_single_step(&s, &cn, 0.7).unwrap(), s);
        assert!(prox_red_single_step(&s, &cn, 0.0).is_err());
    }

    #[test]
    fn prox_is_weighted_average() {
        let blur = DenoiserHandle::default_blur();
        let c = ctx(blur.clone(), 0.3, (4, 4));
        let s = random_vec(16, 4);
        let tau = 0.8;
        let out = prox_red_single_step(&s, &c, tau).unwrap();
        let d = blur
            .denoise(&SeismicSection::from_vector(4, 4, s.clone()).unwrap())
            .unwrap();
        let w = 2.0 * tau * 0.3;
        for i in 0..16 {
            let expected = s[i] / (1.0 + w) + d.samples()[i] * w / (1.0 + w);
            assert!((out[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_prox_example() {
        // s_hat = 1, D(s_hat) = 0.5, tau*lambda = 0.5 -> (1 + 0.5) / 2.
        let s_hat = [1.0];
        let d = [0.5];
        let w: f64 = 2.0 * 0.5;
        let out = (s_hat[0] + w * d[0]) / (1.0 + w);
        assert_eq!(out, 0.75);
    }

    #[test]
    fn null_denoiser_trajectory_equals_lambda_zero() {
        let op = crate::linops::DenseGaussian::new(40, 16, 5).unwrap();
        let y = random_vec(40, 6);
        let opts = SolverOptions::default();
        let a = deep_red_solve(&op, &y, &ctx(DenoiserHandle::null(), 3.0, (4, 4)), &opts).unwrap();
        let b = deep_red_solve(&op, &y, &ctx(DenoiserHandle::default_blur(), 0.0, (4, 4)), &opts)
            .unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.cost_history, b.cost_history);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let c = ctx(DenoiserHandle::null(), 0.0, (4, 4));
        assert!(deep_red_solve(&Identity(16), &[0.0; 15], &c, &SolverOptions::default()).is_err());
        let c = ctx(DenoiserHandle::null(), 0.0, (3, 4));
        assert!(deep_red_solve(&Identity(16), &[0.0; 16], &c, &SolverOptions::default()).is_err());
        assert!(RedContext::new(DenoiserHandle::null(), -1.0, (1, 1)).is_err());
    }

    #[test]
    fn identity_denoising_improves_cost() {
        let c = ctx(DenoiserHandle::default_blur(), 0.5, (8, 8));
        let m = random_vec(64, 9);
        let r = deep_red_solve(&Identity(64), &m, &c, &SolverOptions::default()).unwrap();
        assert!(r.final_cost() < r.initial_cost());
        assert!(r.converged);
    }
}
