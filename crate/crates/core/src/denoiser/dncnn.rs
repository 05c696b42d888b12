//! Residual denoising CNN: `ConvReLU -> (ConvBNReLU)* -> Conv`, all 3x3,
//! predicting the noise component of its single-channel input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{batchnorm_inference, conv2d_same, conv_raw, relu_in_place, FeatureMap};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::SeismicSection;

pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    ConvRelu,
    ConvBnRelu,
    Conv,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::ConvRelu => 0,
            LayerKind::ConvBnRelu => 1,
            LayerKind::Conv => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LayerKind::ConvRelu),
            1 => Some(LayerKind::ConvBnRelu),
            2 => Some(LayerKind::Conv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: DEFAULT_BN_EPSILON,
        }
    }

    /// Inference-mode normalization of channel `c` as `scale * x + shift`.
    pub fn affine(&self, c: usize) -> (f64, f64) {
        let scale = self.gamma[c] / (self.running_var[c] + self.epsilon).sqrt();
        (scale, self.beta[c] - scale * self.running_mean[c])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    /// `[out][in][row][col]`, 3x3 kernels.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub bn: Option<BatchNorm>,
}

impl LayerSpec {
    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("layer {index}: {msg}")));
        if self.in_ch == 0 || self.out_ch == 0 {
            return bad("zero channel count".into());
        }
        if self.kernel.len() != self.out_ch * self.in_ch * 9 {
            return bad(format!(
                "kernel has {} weights, expected {}",
                self.kernel.len(),
                self.out_ch * self.in_ch * 9
            ));
        }
        if self.bias.len() != self.out_ch {
            return bad(format!("bias has {} entries", self.bias.len()));
        }
        match (&self.bn, self.kind) {
            (Some(bn), LayerKind::ConvBnRelu) => {
                let c = self.out_ch;
                if bn.gamma.len() != c
                    || bn.beta.len() != c
                    || bn.running_mean.len() != c
                    || bn.running_var.len() != c
                {
                    return bad("batch-norm vectors do not match channel count".into());
                }
                if bn.running_var.iter().any(|&v| !(v > 0.0)) {
                    return bad("running_var must be positive".into());
                }
                if !(bn.epsilon >= 0.0) {
                    return bad("bn epsilon must be non-negative".into());
                }
            }
            (None, LayerKind::ConvBnRelu) => return bad("missing batch-norm parameters".into()),
            (Some(_), _) => return bad("batch-norm parameters on a non-BN layer".into()),
            (None, _) => {}
        }
        Ok(())
    }

    /// He-initialized layer: kernels ~ N(0, 2 / (9 in_ch)), zero bias,
    /// identity batch norm.
    pub fn init<R: Rng + ?Sized>(kind: LayerKind, in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        let var = 2.0 / (9 * in_ch) as f64;
        Self {
            kind,
            in_ch,
            out_ch,
            kernel: rng::gaussian_vec(rng, out_ch * in_ch * 9, var),
            bias: vec![0.0; out_ch],
            bn: (kind == LayerKind::ConvBnRelu).then(|| BatchNorm::identity(out_ch)),
        }
    }
}

/// Serialized parameters of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsBundle {
    pub layers: Vec<LayerSpec>,
    /// Noise-variance interval (relative to unit signal RMS) the network was
    /// trained on.
    pub noise_band: (f64, f64),
    pub format_version: u32,
}

impl WeightsBundle {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Width of the hidden layers.
    pub fn channels(&self) -> usize {
        self.layers.first().map(|l| l.out_ch).unwrap_or(0)
    }

    /// Fresh network of `depth` layers and `channels` hidden feature maps.
    pub fn init(depth: usize, channels: usize, noise_band: (f64, f64), seed: u64) -> Result<Self> {
        if depth < 2 || channels == 0 {
            return Err(Error::invalid(format!(
                "need depth >= 2 and channels >= 1, got depth {depth}, channels {channels}"
            )));
        }
        let mut r = rng::from_seed(seed);
        let mut layers = Vec::with_capacity(depth);
        layers.push(LayerSpec::init(LayerKind::ConvRelu, 1, channels, &mut r));
        for _ in 1..depth - 1 {
            layers.push(LayerSpec::init(LayerKind::ConvBnRelu, channels, channels, &mut r));
        }
        layers.push(LayerSpec::init(LayerKind::Conv, channels, 1, &mut r));
        let bundle = Self {
            layers,
            noise_band,
            format_version: super::weights_io::DNCW_VERSION,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Checks the architecture: a `1 -> C` ConvReLU, `C -> C` ConvBNReLU
    /// middle layers and a `C -> 1` Conv output.
    pub fn validate(&self) -> Result<()> {
        let n = self.layers.len();
        if n < 2 {
            return Err(Error::invalid(format!("network depth {n} < 2")));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
            let expected = if i == 0 {
                LayerKind::ConvRelu
            } else if i == n - 1 {
                LayerKind::Conv
            } else {
                LayerKind::ConvBnRelu
            };
            if layer.kind != expected {
                return Err(Error::invalid(format!(
                    "layer {i} is {:?}, expected {expected:?}",
                    layer.kind
                )));
            }
            if i > 0 && layer.in_ch != self.layers[i - 1].out_ch {
                return Err(Error::invalid(format!(
                    "layer {i} expects {} channels, previous layer gives {}",
                    layer.in_ch,
                    self.layers[i - 1].out_ch
                )));
            }
        }
        let c = self.layers[0].out_ch;
        if self.layers[0].in_ch != 1 || self.layers[n - 1].out_ch != 1 {
            return Err(Error::invalid("network must map 1 channel to 1 channel"));
        }
        if self.layers[1..n - 1].iter().any(|l| l.out_ch != c) {
            return Err(Error::invalid("hidden layers must share one width"));
        }
        if !(self.noise_band.0 <= self.noise_band.1) {
            return Err(Error::invalid("noise band must satisfy low <= high"));
        }
        Ok(())
    }
}

fn section_to_map(m: &SeismicSection) -> FeatureMap {
    FeatureMap {
        channels: 1,
        height: m.n_channels(),
        width: m.n_time(),
        data: m.to_vector(),
    }
}

/// Runs the layer stack on `m` and returns the predicted noise `L(m)`
/// (no residual subtraction).
pub fn dncnn_residual(weights: &WeightsBundle, m: &SeismicSection) -> Result<SeismicSection> {
    let mut x = section_to_map(m);
    for layer in &weights.layers {
        x = conv2d_same(&x, layer)?;
        if layer.kind == LayerKind::ConvBnRelu {
            x = batchnorm_inference(&x, layer)?;
        }
        if layer.kind != LayerKind::Conv {
            relu_in_place(&mut x.data);
        }
    }
    if x.channels != 1 {
        return Err(Error::invalid("network output is not single-channel"));
    }
    SeismicSection::new(m.n_channels(), m.n_time(), x.data)
        .map_err(|_| Error::invalid("network produced non-finite output"))
}

/// The network with batch norm folded into the preceding convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedNet {
    layers: Vec<FoldedLayer>,
}

#[derive(Debug, Clone, PartialEq)]
struct FoldedLayer {
    in_ch: usize,
    out_ch: usize,
    kernel: Vec<f64>,
    bias: Vec<f64>,
    relu: bool,
}

impl FoldedNet {
    pub fn from_bundle(weights: &WeightsBundle) -> Result<Self> {
        weights.validate()?;
        let layers = weights
            .layers
            .iter()
            .map(|l| {
                let mut kernel = l.kernel.clone();
                let mut bias = l.bias.clone();
                if let Some(bn) = &l.bn {
                    let per_out = l.in_ch * 9;
                    for o in 0..l.out_ch {
                        let (scale, shift) = bn.affine(o);
                        for k in &mut kernel[o * per_out..(o + 1) * per_out] {
                            *k *= scale;
                        }
                        bias[o] = scale * bias[o] + shift;
                    }
                }
                FoldedLayer {
                    in_ch: l.in_ch,
                    out_ch: l.out_ch,
                    kernel,
                    bias,
                    relu: l.kind != LayerKind::Conv,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn residual(&self, m: &SeismicSection) -> Result<SeismicSection> {
        let mut x = section_to_map(m);
        for l in &self.layers {
            debug_assert_eq!(x.channels, l.in_ch);
            x = conv_raw(&x, &l.kernel, &l.bias, l.out_ch);
            if l.relu {
                relu_in_place(&mut x.data);
            }
        }
        SeismicSection::new(m.n_channels(), m.n_time(), x.data)
            .map_err(|_| Error::invalid("network produced non-finite output"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::layers::shifted_dot;

    fn random_bundle(depth: usize, channels: usize, seed: u64) -> WeightsBundle {
        let mut b = WeightsBundle::init(depth, channels, (0.1, 1.0), seed).unwrap();
        let mut r = rng::from_seed(seed ^ 0xabc);
        for l in &mut b.layers {
            for v in &mut l.bias {
                *v = r.random_range(-0.2..0.2);
            }
            if let Some(bn) = &mut l.bn {
                for c in 0..bn.gamma.len() {
                    bn.gamma[c] = r.random_range(0.5..1.5);
                    bn.beta[c] = r.random_range(-0.3..0.3);
                    bn.running_mean[c] = r.random_range(-0.3..0.3);
                    bn.running_var[c] = r.random_range(0.5..2.0);
                }
            }
        }
        b
    }

    fn random_section(h: usize, w: usize, seed: u64) -> SeismicSection {
        let mut r = rng::from_seed(seed);
        SeismicSection::new(h, w, (0..h * w).map(|_| rng::standard_normal(&mut r)).collect())
            .unwrap()
    }

    /// Layer-by-layer scalar evaluation.
    fn brute_forward(b: &WeightsBundle, m: &SeismicSection) -> Vec<f64> {
        let (h, w) = m.shape();
        let mut x = m.to_vector();
        let mut ch = 1;
        for l in &b.layers {
            let mut y = vec![0.0; l.out_ch * h * w];
            for o in 0..l.out_ch {
                for i in 0..h {
                    for j in 0..w {
                        let mut acc = l.bias[o];
                        for c in 0..ch {
                            for dy in 0..3 {
                                for dx in 0..3 {
                                    let (si, sj) = (i as isize + dy - 1, j as isize + dx - 1);
                                    if si < 0 || sj < 0 || si >= h as isize || sj >= w as isize {
                                        continue;
                                    }
                                    acc += l.kernel[(o * ch + c) * 9 + (dy * 3 + dx) as usize]
                                        * x[(c * h + si as usize) * w + sj as usize];
                                }
                            }
                        }
                        if let Some(bn) = &l.bn {
                            acc = bn.gamma[o] * (acc - bn.running_mean[o])
                                / (bn.running_var[o] + bn.epsilon).sqrt()
                                + bn.beta[o];
                        }
                        if l.kind != LayerKind::Conv && acc < 0.0 {
                            acc = 0.0;
                        }
                        y[(o * h + i) * w + j] = acc;
                    }
                }
            }
            x = y;
            ch = l.out_ch;
        }
        x
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let b = WeightsBundle::init(5, 8, (0.0, 1.0), 3).unwrap();
        let m = SeismicSection::zeros(6, 7).unwrap();
        assert!(dncnn_residual(&b, &m).unwrap().samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiny_net_matches_scalar_reference() {
        let b = random_bundle(3, 4, 10);
        let m = random_section(7, 9, 11);
        let fast = dncnn_residual(&b, &m).unwrap();
        let slow = brute_forward(&b, &m);
        for (a, s) in fast.samples().iter().zip(&slow) {
            assert!((a - s).abs() <= 1e-5, "{a} vs {s}");
        }
    }

    #[test]
    fn shape_is_preserved() {
        let b = WeightsBundle::init(5, 16, (0.0, 1.0), 1).unwrap();
        let out = dncnn_residual(&b, &random_section(32, 32, 2)).unwrap();
        assert_eq!(out.shape(), (32, 32));
    }

    #[test]
    fn folding_batchnorm_preserves_output() {
        let b = random_bundle(6, 8, 21);
        let m = random_section(16, 12, 22);
        let plain = dncnn_residual(&b, &m).unwrap();
        let folded = FoldedNet::from_bundle(&b).unwrap().residual(&m).unwrap();
        for (a, f) in plain.samples().iter().zip(folded.samples()) {
            assert!((a - f).abs() <= 1e-5);
        }
    }

    #[test]
    fn init_is_deterministic_and_valid() {
        let a = WeightsBundle::init(5, 16, (0.1, 1.0), 9).unwrap();
        let b = WeightsBundle::init(5, 16, (0.1, 1.0), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.depth(), 5);
        assert_eq!(a.channels(), 16);
        assert_eq!(a.layers[0].kind, LayerKind::ConvRelu);
        assert_eq!(a.layers[4].kind, LayerKind::Conv);
        // Paper-scale architecture is also constructible.
        let full = WeightsBundle::init(20, 64, (0.0, 1.0), 9).unwrap();
        assert_eq!(full.layers[1].kernel.len(), 64 * 64 * 9);
    }

    #[test]
    fn validation_catches_malformed_bundles() {
        let good = WeightsBundle::init(4, 4, (0.0, 1.0), 1).unwrap();
        let mut b = good.clone();
        b.layers[1].bn.as_mut().unwrap().running_var[0] = 0.0;
        assert!(b.validate().is_err());
        let mut b = good.clone();
        b.layers[2].kind = LayerKind::Conv;
        assert!(b.validate().is_err());
        let mut b = good.clone();
        b.layers[0].kernel.pop();
        assert!(b.validate().is_err());
        let mut b = good;
        b.layers.swap(0, 3);
        assert!(b.validate().is_err());
    }

    #[test]
    fn shifted_dot_is_adjoint_of_accumulate() {
        // <accumulate(src, w=1), a> == shifted_dot(a, src)
        let mut r = rng::from_seed(8);
        let (h, w) = (5, 6);
        let a: Vec<f64> = (0..h * w).map(|_| r.random_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..h * w).map(|_| r.random_range(-1.0..1.0)).collect();
        for ky in 0..3 {
            for kx in 0..3 {
                let mut d = vec![0.0; h * w];
                crate::denoiser::layers::accumulate_shifted(&mut d, &s, h, w, ky, kx, 1.0);
                let lhs: f64 = d.iter().zip(&a).map(|(p, q)| p * q).sum();
                assert!((lhs - shifted_dot(&a, &s, h, w, ky, kx)).abs() < 1e-12);
            }
        }
    }
}
