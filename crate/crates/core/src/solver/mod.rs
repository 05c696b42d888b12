//! Forward-backward splitting solvers.

mod fbs;
mod ista;
pub mod line_search;
mod red;

pub use fbs::{fbs_solve, CompositeProblem, FnProblem};
pub use ista::{ista_solve, lasso_cost, soft_threshold};
pub use red::{
    deep_red_solve, deep_red_solve_from, prox_red_single_step, red_gradient, red_value,
    RedContext, RedLeastSquares,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_SYNTHETIC: f64 = 0.01;
pub const DEFAULT_LAMBDA_PATCH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearchMode {
    /// Keep `tau0` for every iteration.
    Fixed,
    /// Barzilai-Borwein steps with non-monotone backtracking.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Initial step size. `None` lets the solver choose (for least-squares
    /// problems `1 / |A|^2`, estimated by power iteration).
    pub tau0: Option<f64>,
    pub max_iters: usize,
    /// Stop when `|s_{k+1} - s_k| / |s_k| < rel_tol`.
    pub rel_tol: f64,
    pub line_search: LineSearchMode,
    /// Memory of the non-monotone acceptance test.
    pub window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tau0: None,
            max_iters: 500,
            rel_tol: 1e-6,
            line_search: LineSearchMode::Adaptive,
            window: 10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::invalid("rel_tol must be non-negative"));
        }
        if self.window == 0 {
            return Err(Error::invalid("line-search window must be at least 1"));
        }
        if let Some(t) = self.tau0 {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!("tau0 must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn fixed(tau0: f64) -> Self {
        Self {
            tau0: Some(tau0),
            line_search: LineSearchMode::Fixed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// Backtracking could not find an acceptable step.
    Stagnation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub estimate: Vec<f64>,
    /// Cost at the start point and after every iteration.
    pub cost_history: Vec<f64>,
    /// Step size used by every iteration.
    pub tau_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl SolverResult {
    pub fn initial_cost(&self) -> f64 {
        self.cost_history[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("cost history is never empty")
    }

    /// Cost trace as `iteration,cost,tau` CSV text.
    pub fn cost_trace_csv(&self) -> String {
        let mut out = String::from("iteration,cost,tau\n");
        for (k, c) in self.cost_history.iter().enumerate() {
            let tau = if k == 0 {
                String::new()
            } else {
                format!("{:?}", self.tau_history[k - 1])
            };
            out.push_str(&format!("{k},{},{tau}\n", crate::float_serde::to_text(*c)));
        }
        out
    }
}
