//! Building blocks of the residual CNN: feature maps, 3x3 "same"
//! convolution with zero padding, inference-mode batch normalization, ReLU.

use super::dncnn::LayerSpec;
use crate::error::{Error, Result};

/// `channels x height x width` activations, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels * height * width != data.len() || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "feature map {channels}x{height}x{width} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub(crate) fn relu_in_place(x: &mut [f64]) {
    for v in x {
        // NaN-preserving: only strictly negative values are zeroed.
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Accumulates `weight * src` shifted by `(ky - 1, kx - 1)` into `dst`, with
/// zero padding outside the plane.
#[inline]
pub(crate) fn accumulate_shifted(
    dst: &mut [f64],
    src: &[f64],
    h: usize,
    w: usize,
    ky: usize,
    kx: usize,
    weight: f64,
) {
    if weight == 0.0 {
        return;
    }
    let y0 = 1usize.saturating_sub(ky);
    let y1 = (h + 1 - ky).min(h);
    let x0 = 1usize.saturating_sub(kx);
    let x1 = (w + 1 - kx).min(w);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = y + ky - 1;
        let d = &mut dst[y * w + x0..y * w + x1];
        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
        for (a, b) in d.iter_mut().zip(s) {
            *a += weight * b;
        }
    }
}

/// Correlation `sum_{y,x} a[y, x] * b[y + ky - 1, x + kx - 1]` over the
/// in-bounds region; the adjoint of [`accumulate_shifted`] in its weight.
#[inline]
pub(crate) fn shifted_dot(a: &[f64], b: &[f64], h: usize, w: usize, ky: usize, kx: usize) -> f64 {
    let y0 = 1usize.saturating_sub(ky);
    let y1 = (h + 1 - ky).min(h);
    let x0 = 1usize.saturating_sub(kx);
    let x1 = (w + 1 - kx).min(w);
    let mut acc = 0.0;
    if x0 >= x1 {
        return acc;
    }
    for y in y0..y1 {
        let sy = y + ky - 1;
        let ra = &a[y * w + x0..y * w + x1];
        let rb = &b[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
        acc += ra.iter().zip(rb).map(|(p, q)| p * q).sum::<f64>();
    }
    acc
}

/// Raw 3x3 convolution (cross-correlation) with zero padding 1.
/// `kernel` is `[out][in][3][3]`.
pub(crate) fn conv_raw(
    input: &FeatureMap,
    kernel: &[f64],
    bias: &[f64],
    out_ch: usize,
) -> FeatureMap {
    let (h, w) = (input.height, input.width);
    let in_ch = input.channels;
    let mut out = FeatureMap::zeros(out_ch, h, w);
    for o in 0..out_ch {
        let dst = out.plane_mut(o);
        dst.fill(bias[o]);
        for i in 0..in_ch {
            let src = input.plane(i);
            let k = &kernel[(o * in_ch + i) * 9..(o * in_ch + i + 1) * 9];
            for ky in 0..3 {
                for kx in 0..3 {
                    accumulate_shifted(dst, src, h, w, ky, kx, k[ky * 3 + kx]);
                }
            }
        }
    }
    out
}

/// Size-preserving 3x3 convolution of `input` with the layer's kernels and
/// biases: `out[o] = bias[o] + sum_i input[i] (*) kernel[o][i]`.
pub fn conv2d_same(input: &FeatureMap, layer: &LayerSpec) -> Result<FeatureMap> {
    if input.channels != layer.in_ch {
        return Err(Error::invalid(format!(
            "conv expects {} input channels, got {}",
            layer.in_ch, input.channels
        )));
    }
    Ok(conv_raw(input, &layer.kernel, &layer.bias, layer.out_ch))
}

/// Per-channel `gamma (x - mean) / sqrt(var + eps) + beta` with the layer's
/// running statistics.
pub fn batchnorm_inference(x: &FeatureMap, layer: &LayerSpec) -> Result<FeatureMap> {
    let bn = layer
        .bn
        .as_ref()
        .ok_or_else(|| Error::invalid("layer has no batch-norm parameters"))?;
    if bn.gamma.len() != x.channels {
        return Err(Error::invalid(format!(
            "batch norm has {} channels, input has {}",
            bn.gamma.len(),
            x.channels
        )));
    }
    let mut out = x.clone();
    for c in 0..x.channels {
        let (scale, shift) = bn.affine(c);
        for v in out.plane_mut(c) {
            *v = scale * *v + shift;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::dncnn::{BatchNorm, LayerKind};
    use crate::rng;
    use rand::Rng;

    fn conv_layer(in_ch: usize, out_ch: usize, kernel: Vec<f64>, bias: Vec<f64>) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Conv,
            in_ch,
            out_ch,
            kernel,
            bias,
            bn: None,
        }
    }

    /// Quadruple-loop reference with explicit zero padding.
    fn brute_conv(input: &FeatureMap, layer: &LayerSpec) -> FeatureMap {
        let (h, w) = (input.height as isize, input.width as isize);
        let mut out = FeatureMap::zeros(layer.out_ch, input.height, input.width);
        for o in 0..layer.out_ch {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = layer.bias[o];
                    for i in 0..layer.in_ch {
                        for dy in -1isize..=1 {
                            for dx in -1isize..=1 {
                                let (sy, sx) = (y + dy, x + dx);
                                if sy < 0 || sy >= h || sx < 0 || sx >= w {
                                    continue;
                                }
                                let k = layer.kernel[((o * layer.in_ch + i) * 3
                                    + (dy + 1) as usize)
                                    * 3
                                    + (dx + 1) as usize];
                                acc += k * input.at(i, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.data[(o * input.height + y as usize) * input.width + x as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert!(relu(&[-3.0, -0.1]).iter().all(|&v| v == 0.0));
        let mut r = rng::from_seed(2);
        let x: Vec<f64> = (0..100).map(|_| r.random_range(-1.0..1.0)).collect();
        assert_eq!(relu(&relu(&x)), relu(&x));
    }

    #[test]
    fn identity_kernel() {
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let layer = conv_layer(1, 1, k, vec![0.0]);
        let input = FeatureMap::new(1, 3, 4, (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(conv2d_same(&input, &layer).unwrap(), input);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let layer = conv_layer(1, 1, vec![1.0; 9], vec![0.0]);
        let input = FeatureMap::new(1, 5, 5, vec![1.0; 25]).unwrap();
        let out = conv2d_same(&input, &layer).unwrap();
        assert_eq!(out.at(0, 2, 2), 9.0);
        assert_eq!(out.at(0, 0, 0), 4.0);
        assert_eq!(out.at(0, 4, 4), 4.0);
        assert_eq!(out.at(0, 0, 2), 6.0);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let layer = conv_layer(2, 1, vec![0.0; 18], vec![0.0]);
        let input = FeatureMap::zeros(1, 3, 3);
        assert!(conv2d_same(&input, &layer).is_err());
    }

    #[test]
    fn conv_matches_brute_force() {
        let mut r = rng::from_seed(77);
        for case in 0..100 {
            let in_ch = r.random_range(1..4);
            let out_ch = r.random_range(1..4);
            let h = r.random_range(1..9);
            let w = r.random_range(1..9);
            let kernel = (0..out_ch * in_ch * 9).map(|_| r.random_range(-1.0..1.0)).collect();
            let bias = (0..out_ch).map(|_| r.random_range(-1.0..1.0)).collect();
            let layer = conv_layer(in_ch, out_ch, kernel, bias);
            let data = (0..in_ch * h * w).map(|_| r.random_range(-2.0..2.0)).collect();
            let input = FeatureMap::new(in_ch, h, w, data).unwrap();
            let fast = conv2d_same(&input, &layer).unwrap();
            let slow = brute_conv(&input, &layer);
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() <= 1e-6, "case {case}: {a} vs {b}");
            }
        }
    }

    fn bn_layer(c: usize, bn: BatchNorm) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::ConvBnRelu,
            in_ch: c,
            out_ch: c,
            kernel: vec![0.0; c * c * 9],
            bias: vec![0.0; c],
            bn: Some(bn),
        }
    }

    #[test]
    fn batchnorm_identity_and_constant() {
        let x = FeatureMap::new(2, 2, 2, (0..8).map(|v| v as f64 - 3.0).collect()).unwrap();
        let id = bn_layer(
            2,
            BatchNorm {
                gamma: vec![1.0; 2],
                beta: vec![0.0; 2],
                running_mean: vec![0.0; 2],
                running_var: vec![1.0; 2],
                epsilon: 0.0,
            },
        );
        assert_eq!(batchnorm_inference(&x, &id).unwrap(), x);
        let flat = bn_layer(
            2,
            BatchNorm {
                gamma: vec![0.0; 2],
                beta: vec![0.5, -1.5],
                running_mean: vec![0.3; 2],
                running_var: vec![2.0; 2],
                epsilon: 1e-5,
            },
        );
        let out = batchnorm_inference(&x, &flat).unwrap();
        assert!(out.plane(0).iter().all(|&v| v == 0.5));
        assert!(out.plane(1).iter().all(|&v| v == -1.5));
    }

    #[test]
    fn batchnorm_matches_scalar_loop() {
        let mut r = rng::from_seed(4);
        let c = 3;
        let bn = BatchNorm {
            gamma: (0..c).map(|_| r.random_range(-2.0..2.0)).collect(),
            beta: (0..c).map(|_| r.random_range(-2.0..2.0)).collect(),
            running_mean: (0..c).map(|_| r.random_range(-1.0..1.0)).collect(),
            running_var: (0..c).map(|_| r.random_range(0.1..3.0)).collect(),
            epsilon: 1e-5,
        };
        let layer = bn_layer(c, bn.clone());
        let x = FeatureMap::new(c, 4, 5, (0..60).map(|_| r.random_range(-3.0..3.0)).collect())
            .unwrap();
        let out = batchnorm_inference(&x, &layer).unwrap();
        for ch in 0..c {
            for k in 0..20 {
                let v = x.data[ch * 20 + k];
                let want = bn.gamma[ch] * (v - bn.running_mean[ch])
                    / (bn.running_var[ch] + bn.epsilon).sqrt()
                    + bn.beta[ch];
                assert!((out.data[ch * 20 + k] - want).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn batchnorm_requires_params() {
        let layer = conv_layer(1, 1, vec![0.0; 9], vec![0.0]);
        assert!(batchnorm_inference(&FeatureMap::zeros(1, 2, 2), &layer).is_err());
    }
}
