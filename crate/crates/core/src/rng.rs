//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), a
//! counter-based generator whose output is fixed across platforms. A stream
//! is identified by `(seed, stream_index)`: the seed is expanded with
//! `seed_from_u64` and the index selects the ChaCha stream, so Monte Carlo
//! realization `k` of a run with master seed `s` always sees the same draws
//! no matter which worker executes it. Gaussian variates use the ziggurat
//! transform of `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeedRng = ChaCha8Rng;

/// Generator for stream 0 of `seed`.
pub fn from_seed(seed: u64) -> SeedRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`.
pub fn stream(seed: u64, index: u64) -> SeedRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Fills a vector with i.i.d. N(0, variance) samples.
pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> Vec<f64> {
    let sd = variance.sqrt();
    (0..len).map(|_| sd * standard_normal(rng)).collect()
}
