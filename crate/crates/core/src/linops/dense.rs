use super::LinearOperator;
use crate::error::{Error, Result};
use crate::rng;

/// Dense `p x q` matrix with i.i.d. N(0, 1/p) entries, so that
/// `E|Ax|^2 = |x|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGaussian {
    p: usize,
    q: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl DenseGaussian {
    pub fn new(p: usize, q: usize, seed: u64) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::invalid(format!("matrix dims must be positive, got {p}x{q}")));
        }
        let mut r = rng::from_seed(seed);
        Ok(Self {
            p,
            q,
            data: rng::gaussian_vec(&mut r, p * q, 1.0 / p as f64),
        })
    }

    pub fn from_matrix(p: usize, q: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 || q == 0 || data.len() != p * q {
            return Err(Error::invalid("matrix data does not match dims"));
        }
        Ok(Self { p, q, data })
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }
}

impl LinearOperator for DenseGaussian {
    fn rows(&self) -> usize {
        self.p
    }

    fn cols(&self) -> usize {
        self.q
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.q, "forward: input length");
        self.data
            .chunks_exact(self.q)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.p, "adjoint: input length");
        let mut out = vec![0.0; self.q];
        for (row, &yi) in self.data.chunks_exact(self.q).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::adjoint_check;

    #[test]
    fn one_by_one() {
        let a = DenseGaussian::from_matrix(1, 1, vec![-2.5]).unwrap();
        assert_eq!(a.forward(&[2.0]), vec![-5.0]);
        assert_eq!(a.adjoint(&[3.0]), vec![-7.5]);
    }

    #[test]
    fn paper_shape() {
        let q = 1024;
        let a = DenseGaussian::new(8 * q, q, 1).unwrap();
        assert_eq!(a.rows(), 8192);
    }

    #[test]
    fn adjoint_identity_on_random_pairs() {
        for (p, q) in [(30, 10), (10, 30), (16, 16)] {
            let a = DenseGaussian::new(p, q, 5).unwrap();
            assert!(adjoint_check(&a, 100, 6) <= 1e-6);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(DenseGaussian::new(7, 5, 3).unwrap(), DenseGaussian::new(7, 5, 3).unwrap());
        assert_ne!(DenseGaussian::new(7, 5, 3).unwrap(), DenseGaussian::new(7, 5, 4).unwrap());
    }

    #[test]
    fn column_norms_concentrate() {
        let (p, q) = (256, 64);
        let a = DenseGaussian::new(p, q, 11).unwrap();
        let mean_sq: f64 = (0..q)
            .map(|j| (0..p).map(|i| a.entries()[i * q + j].powi(2)).sum::<f64>())
            .sum::<f64>()
            / q as f64;
        assert!((0.8..=1.2).contains(&mean_sq), "{mean_sq}");
    }
}
