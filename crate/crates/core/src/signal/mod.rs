//! Grid data model, patch tiling, metrics and file formats.

mod io;
mod metrics;
mod patches;

pub use io::{
    decode_sgrd, encode_sgrd, read_csv, read_sgrd, write_csv, write_sgrd, SGRD_MAGIC,
    SGRD_VERSION,
};
pub use metrics::{
    add_noise_for_snr, gaussian_noise_for_snr, lh_factor, quality_q, rms, MetricRecord, NoiseSpec,
    DEFAULT_LH_EPSILON,
};
pub use patches::{assemble_patches, partition_patches, PatchLayout, PatchRect};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 2D grid of samples, `n_channels` rows of `n_time` samples each,
/// stored row-major (channel, then time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeismicSection {
    n_channels: usize,
    n_time: usize,
    samples: Vec<f64>,
}

impl SeismicSection {
    pub fn new(n_channels: usize, n_time: usize, samples: Vec<f64>) -> Result<Self> {
        if n_channels == 0 || n_time == 0 {
            return Err(Error::invalid(format!(
                "section dims must be positive, got {n_channels}x{n_time}"
            )));
        }
        if samples.len() != n_channels * n_time {
            return Err(Error::invalid(format!(
                "section {n_channels}x{n_time} needs {} samples, got {}",
                n_channels * n_time,
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            n_channels,
            n_time,
            samples,
        })
    }

    pub fn zeros(n_channels: usize, n_time: usize) -> Result<Self> {
        Self::new(n_channels, n_time, vec![0.0; n_channels * n_time])
    }

    /// Inverse of [`to_vector`](Self::to_vector).
    pub fn from_vector(n_channels: usize, n_time: usize, v: Vec<f64>) -> Result<Self> {
        Self::new(n_channels, n_time, v)
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_channels, self.n_time)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, channel: usize, t: usize) -> f64 {
        self.samples[channel * self.n_time + t]
    }

    /// Vectorized view of the section (length `n_channels * n_time`).
    pub fn to_vector(&self) -> Vec<f64> {
        self.samples.clone()
    }

    pub fn into_vector(self) -> Vec<f64> {
        self.samples
    }

    /// Elementwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.n_channels,
            self.n_time,
            self.samples.iter().map(|&v| f(v)).collect(),
        )
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}
