//! Linear measurement operators with forward/adjoint pairs.
//!
//! Sections are vectorized (channel-major) before measurement, so every
//! operator acts on plain vectors of length `q` and produces length `p`.

mod dct;
mod dense;

pub use dct::{dct_1d, idct_1d, RandomizedDct};
pub use dense::DenseGaussian;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub trait LinearOperator: Send + Sync {
    /// Output dimension `p`.
    fn rows(&self) -> usize;
    /// Input dimension `q`.
    fn cols(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn rows(&self) -> usize {
        self.0
    }
    fn cols(&self) -> usize {
        self.0
    }
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    DenseGaussian,
    RandomizedDct,
    Identity,
}

/// Serializable description of an operator; the operator itself is
/// regenerated from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearOperatorSpec {
    pub kind: OperatorKind,
    pub p: usize,
    pub q: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl LinearOperatorSpec {
    pub fn new(kind: OperatorKind, p: usize, q: usize, seed: u64) -> Self {
        Self {
            kind,
            p,
            q,
            seed,
            scale: 1.0,
        }
    }

    pub fn build(&self) -> Result<Operator> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::invalid(format!(
                "operator dims must be positive, got {}x{}",
                self.p, self.q
            )));
        }
        let op = match self.kind {
            OperatorKind::Identity => {
                if self.p != self.q {
                    return Err(Error::invalid("identity operator must be square"));
                }
                Operator::Identity(Identity(self.q))
            }
            OperatorKind::DenseGaussian => {
                Operator::Dense(DenseGaussian::new(self.p, self.q, self.seed)?)
            }
            OperatorKind::RandomizedDct => {
                Operator::Dct(RandomizedDct::new(self.p, self.q, self.seed)?)
            }
        };
        Ok(if self.scale == 1.0 {
            op
        } else {
            Operator::Scaled(Box::new(op), self.scale)
        })
    }
}

/// A concrete operator built from a [`LinearOperatorSpec`].
#[derive(Debug, Clone)]
pub enum Operator {
    Identity(Identity),
    Dense(DenseGaussian),
    Dct(RandomizedDct),
    Scaled(Box<Operator>, f64),
}

impl LinearOperator for Operator {
    fn rows(&self) -> usize {
        match self {
            Operator::Identity(o) => o.rows(),
            Operator::Dense(o) => o.rows(),
            Operator::Dct(o) => o.rows(),
            Operator::Scaled(o, _) => o.rows(),
        }
    }
    fn cols(&self) -> usize {
        match self {
            Operator::Identity(o) => o.cols(),
            Operator::Dense(o) => o.cols(),
            Operator::Dct(o) => o.cols(),
            Operator::Scaled(o, _) => o.cols(),
        }
    }
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Operator::Identity(o) => o.forward(x),
            Operator::Dense(o) => o.forward(x),
            Operator::Dct(o) => o.forward(x),
            Operator::Scaled(o, s) => o.forward(x).into_iter().map(|v| v * s).collect(),
        }
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Operator::Identity(o) => o.adjoint(y),
            Operator::Dense(o) => o.adjoint(y),
            Operator::Dct(o) => o.adjoint(y),
            Operator::Scaled(o, s) => o.adjoint(y).into_iter().map(|v| v * s).collect(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest relative discrepancy `|<Ax, y> - <x, A^T y>| / (|Ax| |y|)` over
/// `trials` random vectors. Each trial checks a random `y` and `y = Ax`; the
/// latter makes a sign error in the adjoint show up as a discrepancy of 2.
pub fn adjoint_check(op: &dyn LinearOperator, trials: usize, seed: u64) -> f64 {
    let mut r = rng::from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..op.cols()).map(|_| rng::standard_normal(&mut r)).collect();
        let ax = op.forward(&x);
        let y_rand: Vec<f64> = (0..op.rows()).map(|_| rng::standard_normal(&mut r)).collect();
        for y in [y_rand, ax.clone()] {
            let denom = norm(&ax) * norm(&y);
            if denom == 0.0 {
                continue;
            }
            let disc = (dot(&ax, &y) - dot(&x, &op.adjoint(&y))).abs() / denom;
            worst = worst.max(disc);
        }
    }
    worst
}

/// Estimate of the spectral norm `|A|` from `iters` power iterations on
/// `A^T A`.
pub fn op_norm_estimate(op: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    let mut r = rng::from_seed(seed);
    let mut v: Vec<f64> = (0..op.cols()).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let n = norm(&v);
        if n == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= n);
        let w = op.adjoint(&op.forward(&v));
        est = dot(&v, &w).max(0.0).sqrt();
        v = w;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Negated(DenseGaussian);

    impl LinearOperator for Negated {
        fn rows(&self) -> usize {
            self.0.rows()
        }
        fn cols(&self) -> usize {
            self.0.cols()
        }
        fn forward(&self, x: &[f64]) -> Vec<f64> {
            self.0.forward(x)
        }
        fn adjoint(&self, y: &[f64]) -> Vec<f64> {
            self.0.adjoint(y).into_iter().map(|v| -v).collect()
        }
    }

    #[test]
    fn identity_adjoint_exact() {
        assert!(adjoint_check(&Identity(17), 5, 1) < 1e-15);
    }

    #[test]
    fn broken_adjoint_detected() {
        let d = adjoint_check(&Negated(DenseGaussian::new(20, 10, 3).unwrap()), 3, 4);
        assert!((d - 2.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn spec_builds_each_kind() {
        for (kind, p, q) in [
            (OperatorKind::Identity, 9, 9),
            (OperatorKind::DenseGaussian, 12, 9),
            (OperatorKind::RandomizedDct, 5, 9),
        ] {
            let op = LinearOperatorSpec::new(kind, p, q, 7).build().unwrap();
            assert_eq!((op.rows(), op.cols()), (p, q));
            assert!(adjoint_check(&op, 10, 1) <= 1e-6);
        }
        assert!(LinearOperatorSpec::new(OperatorKind::Identity, 3, 4, 0).build().is_err());
        assert!(LinearOperatorSpec::new(OperatorKind::RandomizedDct, 5, 4, 0).build().is_err());
        let mut scaled = LinearOperatorSpec::new(OperatorKind::DenseGaussian, 6, 4, 1);
        scaled.scale = 2.5;
        let op = scaled.build().unwrap();
        assert!(adjoint_check(&op, 10, 2) <= 1e-6);
    }

    #[test]
    fn spec_json_round_trip() {
        let s = LinearOperatorSpec::new(OperatorKind::RandomizedDct, 512, 1024, 42);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"randomized_dct\""));
        let back: LinearOperatorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let parsed: LinearOperatorSpec =
            serde_json::from_str(r#"{"kind":"dense_gaussian","p":8,"q":4,"seed":3}"#).unwrap();
        assert_eq!(parsed.scale, 1.0);
    }

    #[test]
    fn power_iteration_recovers_norm() {
        let d = DenseGaussian::from_matrix(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((op_norm_estimate(&d, 20, 1) - 3.0).abs() < 1e-6);
    }
}
