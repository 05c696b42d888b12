//! Denoisers `D(m) = m - L(m)` and their residual (noise) estimators `L`.

mod bank;
mod blur;
pub mod dncnn;
pub mod layers;
pub mod weights_io;

use std::sync::Arc;

pub use bank::{load_bank, parse_bank_spec, select_operator, Candidate, Criterion, Selection};
pub use blur::{circular_blur, gaussian_kernel};
pub use dncnn::{dncnn_residual, BatchNorm, FoldedNet, LayerKind, LayerSpec, WeightsBundle};
pub use layers::{batchnorm_inference, conv2d_same, relu, FeatureMap};
pub use weights_io::{decode_weights, encode_weights, load_weights, save_weights};

use crate::error::Result;
use crate::signal::{rms, SeismicSection};

pub const DEFAULT_BLUR_RADIUS: usize = 2;
pub const DEFAULT_BLUR_SIGMA: f64 = 1.0;

#[derive(Debug, Clone)]
pub enum Variant {
    /// Residual CNN. Inputs are scaled to unit RMS before the network and
    /// the predicted noise is scaled back.
    DnCnn {
        weights: Arc<WeightsBundle>,
        folded: Arc<FoldedNet>,
    },
    GaussianBlur {
        radius: usize,
        sigma: f64,
        kernel: Vec<f64>,
    },
    Null,
}

/// A denoiser in an operator bank. Immutable and cheap to clone.
#[derive(Debug, Clone)]
pub struct DenoiserHandle {
    name: String,
    variant: Variant,
}

impl DenoiserHandle {
    pub fn dncnn(name: impl Into<String>, weights: WeightsBundle) -> Result<Self> {
        let folded = FoldedNet::from_bundle(&weights)?;
        Ok(Self {
            name: name.into(),
            variant: Variant::DnCnn {
                weights: Arc::new(weights),
                folded: Arc::new(folded),
            },
        })
    }

    pub fn gaussian_blur(radius: usize, sigma: f64) -> Result<Self> {
        Ok(Self {
            name: format!("blur-r{radius}-s{sigma}"),
            variant: Variant::GaussianBlur {
                radius,
                sigma,
                kernel: gaussian_kernel(radius, sigma)?,
            },
        })
    }

    /// 5x5 blur with sigma 1.
    pub fn default_blur() -> Self {
        Self::gaussian_blur(DEFAULT_BLUR_RADIUS, DEFAULT_BLUR_SIGMA).expect("valid defaults")
    }

    pub fn null() -> Self {
        Self {
            name: "null".into(),
            variant: Variant::Null,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn weights(&self) -> Option<&WeightsBundle> {
        match &self.variant {
            Variant::DnCnn { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self.variant, Variant::Null)
    }

    /// Estimated noise component `L(m)`.
    pub fn residual(&self, m: &SeismicSection) -> Result<SeismicSection> {
        match &self.variant {
            Variant::DnCnn { folded, .. } => {
                let scale = rms(m.samples());
                if scale == 0.0 {
                    return SeismicSection::zeros(m.n_channels(), m.n_time());
                }
                let unit = m.map(|v| v / scale)?;
                folded.residual(&unit)?.map(|v| v * scale)
            }
            Variant::GaussianBlur { radius, kernel, .. } => {
                let blurred = circular_blur(m, *radius, kernel)?;
                SeismicSection::new(
                    m.n_channels(),
                    m.n_time(),
                    m.samples()
                        .iter()
                        .zip(blurred.samples())
                        .map(|(a, b)| a - b)
                        .collect(),
                )
            }
            Variant::Null => SeismicSection::zeros(m.n_channels(), m.n_time()),
        }
    }

    /// Denoised estimate `D(m)`.
    pub fn denoise(&self, m: &SeismicSection) -> Result<SeismicSection> {
        match &self.variant {
            Variant::GaussianBlur { radius, kernel, .. } => circular_blur(m, *radius, kernel),
            Variant::Null => Ok(m.clone()),
            Variant::DnCnn { .. } => {
                let l = self.residual(m)?;
                SeismicSection::new(
                    m.n_channels(),
                    m.n_time(),
                    m.samples()
                        .iter()
                        .zip(l.samples())
                        .map(|(a, b)| a - b)
                        .collect(),
                )
            }
        }
    }
}

pub fn denoise(handle: &DenoiserHandle, m: &SeismicSection) -> Result<SeismicSection> {
    handle.denoise(m)
}
