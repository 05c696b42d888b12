use super::line_search::{
    accepts, bb_step, NonMonotoneMemory, BACKTRACK_FACTOR, MAX_BACKTRACKS, TAU_MAX, TAU_MIN,
};
use super::{LineSearchMode, SolverOptions, SolverResult, StopReason};
use crate::error::{Error, Result};
use crate::linops::norm;

/// `min_s f(s) + g(s)` with `f` smooth and `g` accessed through its
/// proximal map.
pub trait CompositeProblem {
    /// `f(s)` and `grad f(s)`.
    fn smooth(&self, s: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// `argmin_x tau g(x) + |x - z|^2 / 2`, or an approximation of it.
    fn prox(&self, z: &[f64], tau: f64) -> Result<Vec<f64>>;

    /// Objective recorded in the cost history; defaults to `f` alone.
    fn cost(&self, s: &[f64]) -> Result<f64> {
        Ok(self.smooth(s)?.0)
    }

    /// [`Self::cost`] when `f(s)` is already known.
    fn cost_given_smooth(&self, s: &[f64], _f: f64) -> Result<f64> {
        self.cost(s)
    }
}

/// [`CompositeProblem`] assembled from closures.
pub struct FnProblem<F, G, P, C> {
    pub f: F,
    pub grad_f: G,
    pub prox_g: P,
    pub cost: C,
}

impl<F, G, P, C> CompositeProblem for FnProblem<F, G, P, C>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64], f64) -> Vec<f64>,
    C: Fn(&[f64]) -> f64,
{
    fn smooth(&self, s: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((self.f)(s), (self.grad_f)(s)))
    }

    fn prox(&self, z: &[f64], tau: f64) -> Result<Vec<f64>> {
        Ok((self.prox_g)(z, tau))
    }

    fn cost(&self, s: &[f64]) -> Result<f64> {
        Ok((self.cost)(s))
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

type Step = (Vec<f64>, f64, Vec<f64>);

/// One forward-backward step from `s`. In adaptive mode `tau` is halved
/// until the step passes the acceptance test; `None` means backtracking was
/// exhausted.
fn forward_backward_step(
    problem: &dyn CompositeProblem,
    s: &[f64],
    grad: &[f64],
    memory: &NonMonotoneMemory,
    tau: &mut f64,
    adaptive: bool,
    iteration: usize,
) -> Result<Option<Step>> {
    let mut backtracks = 0;
    loop {
        let s_hat: Vec<f64> = s.iter().zip(grad).map(|(a, g)| a - *tau * g).collect();
        let s_new = problem.prox(&s_hat, *tau)?;
        let trial = if all_finite(&s_new) {
            let (f_new, grad_new) = problem.smooth(&s_new)?;
            Some((s_new, f_new, grad_new))
        } else {
            None
        };
        if !adaptive {
            return match trial {
                Some(t) if t.1.is_finite() && all_finite(&t.2) => Ok(Some(t)),
                _ => Err(Error::Diverged { iteration }),
            };
        }
        if let Some((s_new, f_new, grad_new)) = trial {
            if all_finite(&grad_new) && accepts(f_new, memory.reference(), s, &s_new, grad, *tau) {
                return Ok(Some((s_new, f_new, grad_new)));
            }
        }
        if backtracks == MAX_BACKTRACKS || *tau <= TAU_MIN {
            return Ok(None);
        }
        *tau = (*tau * BACKTRACK_FACTOR).max(TAU_MIN);
        backtracks += 1;
    }
}

/// Forward-backward splitting:
///
/// ```text
/// s_hat = s_k - tau_k grad f(s_k)
/// s_k+1 = prox_g(s_hat, tau_k)
/// ```
///
/// In adaptive mode `tau_k` comes from a Barzilai-Borwein step on the smooth
/// term, halved until the non-monotone sufficient-decrease test holds.
pub fn fbs_solve(
    problem: &dyn CompositeProblem,
    s0: &[f64],
    opts: &SolverOptions,
) -> Result<SolverResult> {
    opts.validate()?;
    let mut tau = opts.tau0.unwrap_or(1.0);
    let adaptive = opts.line_search == LineSearchMode::Adaptive;

    let mut s = s0.to_vec();
    let (mut f, mut grad) = problem.smooth(&s)?;
    if !f.is_finite() || !all_finite(&grad) {
        return Err(Error::Diverged { iteration: 0 });
    }
    let mut memory = NonMonotoneMemory::new(opts.window);
    memory.push(f);
    let mut cost_history = vec![problem.cost_given_smooth(&s, f)?];
    let mut tau_history = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;

    for k in 1..=opts.max_iters {
        let Some((s_new, f_new, grad_new)) =
            forward_backward_step(problem, &s, &grad, &memory, &mut tau, adaptive, k)?
        else {
            stop_reason = StopReason::Stagnation;
            break;
        };

        tau_history.push(tau);
        let ds: Vec<f64> = s_new.iter().zip(&s).map(|(a, b)| a - b).collect();
        let step = norm(&ds);
        let base = norm(&s);
        let rel = if base > 0.0 { step / base } else { step };

        if adaptive {
            let dg: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
            if let Some(t) = bb_step(&ds, &dg) {
                tau = t;
            }
            tau = tau.clamp(TAU_MIN, TAU_MAX);
        }

        s = s_new;
        f = f_new;
        grad = grad_new;
        memory.push(f);
        let c = problem.cost_given_smooth(&s, f)?;
        if !c.is_finite() {
            return Err(Error::Diverged { iteration: k });
        }
        cost_history.push(c);

        if rel < opts.rel_tol {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    let iterations = tau_history.len();
    Ok(SolverResult {
        estimate: s,
        cost_history,
        tau_history,
        iterations,
        converged: stop_reason == StopReason::Converged,
        stop_reason,
    })
}
