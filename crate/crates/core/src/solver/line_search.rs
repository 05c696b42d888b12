//! Step-size control for forward-backward splitting: spectral
//! (Barzilai-Borwein) step proposals with a non-monotone sufficient-decrease
//! test.

use std::collections::VecDeque;

use crate::linops::dot;

pub const TAU_MIN: f64 = 1e-12;
pub const TAU_MAX: f64 = 1e12;
pub const MAX_BACKTRACKS: usize = 60;
pub const BACKTRACK_FACTOR: f64 = 0.5;

/// The last `window` smooth-term values.
#[derive(Debug, Clone)]
pub struct NonMonotoneMemory {
    window: usize,
    values: VecDeque<f64>,
}

impl NonMonotoneMemory {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            values: VecDeque::with_capacity(window.max(1)),
        }
    }

    pub fn push(&mut self, f: f64) {
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(f);
    }

    pub fn reference(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sufficient-decrease test for a forward-backward step from `s` (gradient
/// `grad`) to `s_new`:
/// `f(s_new) <= max_recent_f + <s_new - s, grad> + |s_new - s|^2 / (2 tau)`.
pub fn accepts(
    f_new: f64,
    reference: f64,
    s: &[f64],
    s_new: &[f64],
    grad: &[f64],
    tau: f64,
) -> bool {
    let mut lin = 0.0;
    let mut sq = 0.0;
    for ((a, b), g) in s_new.iter().zip(s).zip(grad) {
        let d = a - b;
        lin += d * g;
        sq += d * d;
    }
    // Relative slack absorbs rounding once the iterates have converged.
    let slack = 1e-12 * reference.abs().max(f_new.abs());
    f_new.is_finite() && f_new <= reference + lin + sq / (2.0 * tau) + slack
}

/// Spectral step `<ds, ds> / <ds, dg>` from successive iterate and gradient
/// differences, or `None` when the curvature estimate is not positive.
pub fn bb_step(ds: &[f64], dg: &[f64]) -> Option<f64> {
    let sy = dot(ds, dg);
    let ss = dot(ds, ds);
    if sy > 0.0 && ss > 0.0 {
        let t = ss / sy;
        t.is_finite().then(|| t.clamp(TAU_MIN, TAU_MAX))
    } else {
        None
    }
}
