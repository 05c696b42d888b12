use std::f64::consts::PI;

use rand::seq::index;
use rand::Rng;

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::rng;

/// `cos(pi m / (2n))` for `m` in `0..4n`; DCT-II entries index into it with
/// `m = (2j + 1) k mod 4n`.
fn cos_table(n: usize) -> Vec<f64> {
    (0..4 * n).map(|m| (PI * m as f64 / (2 * n) as f64).cos()).collect()
}

fn alpha(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal DCT-II.
pub fn dct_1d(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let table = cos_table(n);
    (0..n)
        .map(|k| {
            alpha(k, n)
                * x.iter()
                    .enumerate()
                    .map(|(j, v)| v * table[((2 * j + 1) * k) % (4 * n)])
                    .sum::<f64>()
        })
        .collect()
}

/// Inverse of [`dct_1d`] (orthonormal DCT-III).
pub fn idct_1d(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let table = cos_table(n);
    (0..n)
        .map(|j| {
            c.iter()
                .enumerate()
                .map(|(k, v)| alpha(k, n) * v * table[((2 * j + 1) * k) % (4 * n)])
                .sum()
        })
        .collect()
}

/// Subsampled randomized DCT:
/// `A x = sqrt(q/p) * R_p C D x` with `D` a random +-1 diagonal, `C` the
/// orthonormal DCT-II and `R_p` a selection of `p` distinct rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedDct {
    q: usize,
    rows: Vec<usize>,
    signs: Vec<f64>,
    /// The selected rows of `C`, `p x q` row-major.
    basis: Vec<f64>,
    scale: f64,
}

impl RandomizedDct {
    pub fn new(p: usize, q: usize, seed: u64) -> Result<Self> {
        if p == 0 || q == 0 || p > q {
            return Err(Error::invalid(format!(
                "randomized DCT needs 1 <= p <= q, got p={p}, q={q}"
            )));
        }
        let mut r = rng::from_seed(seed);
        let signs = (0..q)
            .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let mut rows = index::sample(&mut r, q, p).into_vec();
        rows.sort_unstable();
        Self::from_parts(q, rows, signs)
    }

    /// Operator with an explicit row subset and sign pattern.
    pub fn from_parts(q: usize, rows: Vec<usize>, signs: Vec<f64>) -> Result<Self> {
        let p = rows.len();
        if p == 0 || p > q || signs.len() != q {
            return Err(Error::invalid("row subset or sign pattern does not match q"));
        }
        if rows.iter().any(|&k| k >= q) || rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("rows must be strictly increasing and < q"));
        }
        let table = cos_table(q);
        let mut basis = Vec::with_capacity(p * q);
        for &k in &rows {
            let a = alpha(k, q);
            basis.extend((0..q).map(|j| a * table[((2 * j + 1) * k) % (4 * q)]));
        }
        Ok(Self {
            q,
            rows,
            signs,
            basis,
            scale: (q as f64 / p as f64).sqrt(),
        })
    }

    pub fn selected_rows(&self) -> &[usize] {
        &self.rows
    }
}

impl LinearOperator for RandomizedDct {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn cols(&self) -> usize {
        self.q
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.q, "forward: input length");
        let flipped: Vec<f64> = x.iter().zip(&self.signs).map(|(a, s)| a * s).collect();
        self.basis
            .chunks_exact(self.q)
            .map(|row| self.scale * row.iter().zip(&flipped).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows.len(), "adjoint: input length");
        let mut out = vec![0.0; self.q];
        for (row, &yk) in self.basis.chunks_exact(self.q).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yk;
            }
        }
        for (o, s) in out.iter_mut().zip(&self.signs) {
            *o *= self.scale * s;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{adjoint_check, norm};

    #[test]
    fn constant_vector_concentrates_in_dc() {
        let c = dct_1d(&[2.0; 16]);
        assert!((c[0] - 2.0 * 4.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut r = rng::from_seed(3);
        let x: Vec<f64> = (0..64).map(|_| rng::standard_normal(&mut r)).collect();
        let c = dct_1d(&x);
        let back = idct_1d(&c);
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
        assert!((norm(&c) - norm(&x)).abs() <= 1e-10);
    }

    #[test]
    fn compression_shape() {
        let op = RandomizedDct::new(512, 1024, 9).unwrap();
        assert_eq!((op.rows(), op.cols()), (512, 1024));
        assert!(RandomizedDct::new(1025, 1024, 9).is_err());
    }

    #[test]
    fn full_unsigned_operator_is_orthonormal() {
        let q = 128;
        let op = RandomizedDct::from_parts(q, (0..q).collect(), vec![1.0; q]).unwrap();
        let mut r = rng::from_seed(4);
        let x: Vec<f64> = (0..q).map(|_| rng::standard_normal(&mut r)).collect();
        assert!((norm(&op.forward(&x)) - norm(&x)).abs() <= 1e-10);
        for (a, b) in op.forward(&x).iter().zip(dct_1d(&x)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn square_randomized_operator_is_isometry() {
        let op = RandomizedDct::new(100, 100, 12).unwrap();
        let mut r = rng::from_seed(5);
        let x: Vec<f64> = (0..100).map(|_| rng::standard_normal(&mut r)).collect();
        assert!((norm(&op.forward(&x)) - norm(&x)).abs() <= 1e-9);
        let back = op.adjoint(&op.forward(&x));
        assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn energy_preserved_in_expectation() {
        let q = 64;
        let mut r = rng::from_seed(6);
        let x: Vec<f64> = (0..q).map(|_| rng::standard_normal(&mut r)).collect();
        let trials = 1000;
        let mean: f64 = (0..trials)
            .map(|s| {
                let op = RandomizedDct::new(q / 2, q, s).unwrap();
                norm(&op.forward(&x)).powi(2)
            })
            .sum::<f64>()
            / trials as f64;
        let target = norm(&x).powi(2);
        assert!((mean / target - 1.0).abs() < 0.05, "{mean} vs {target}");
    }

    #[test]
    fn adjoint_and_determinism() {
        for (p, q, seed) in [(10, 40, 1), (40, 40, 2), (1, 7, 3)] {
            let a = RandomizedDct::new(p, q, seed).unwrap();
            assert!(adjoint_check(&a, 20, seed) <= 1e-6);
            assert_eq!(a, RandomizedDct::new(p, q, seed).unwrap());
        }
    }
}
