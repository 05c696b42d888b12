//! Reverse-mode differentiation of the residual network over a batch.

use rayon::prelude::*;

use crate::denoiser::layers::{accumulate_shifted, conv_raw, shifted_dot, FeatureMap};
use crate::denoiser::{LayerKind, LayerSpec, WeightsBundle};
use crate::error::{Error, Result};
use crate::signal::SeismicSection;

/// Source of the batch-norm statistics in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Stored running statistics; examples are independent.
    Frozen,
    /// Per-channel mean and biased variance over the batch and all pixels.
    Batch,
}

/// One `(noisy, clean)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub noisy: SeismicSection,
    pub clean: SeismicSection,
    /// Noise variance drawn for this pair.
    pub sigma_sq: f64,
}

impl TrainingPair {
    pub fn new(noisy: SeismicSection, clean: SeismicSection) -> Result<Self> {
        noisy.check_same_shape(&clean)?;
        Ok(Self {
            noisy,
            clean,
            sigma_sq: 0.0,
        })
    }
}

/// Gradient of one layer; `gamma`/`beta` are empty without batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Gradient with the trainable shape of a [`WeightsBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(weights: &WeightsBundle) -> Self {
        let layers = weights
            .layers
            .iter()
            .map(|l| {
                let bn = l.bn.as_ref().map_or(0, |b| b.gamma.len());
                LayerGrad {
                    kernel: vec![0.0; l.kernel.len()],
                    bias: vec![0.0; l.bias.len()],
                    gamma: vec![0.0; bn],
                    beta: vec![0.0; bn],
                }
            })
            .collect();
        Self { layers }
    }

    /// Concatenation in [`trainable_params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.kernel);
            out.extend_from_slice(&l.bias);
            out.extend_from_slice(&l.gamma);
            out.extend_from_slice(&l.beta);
        }
        out
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in [
                (&mut a.kernel, &b.kernel),
                (&mut a.bias, &b.bias),
                (&mut a.gamma, &b.gamma),
                (&mut a.beta, &b.beta),
            ] {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
            }
        }
    }
}

/// Kernel, bias, gamma and beta of every layer, in order.
pub fn trainable_params(weights: &WeightsBundle) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &weights.layers {
        out.extend_from_slice(&l.kernel);
        out.extend_from_slice(&l.bias);
        if let Some(bn) = &l.bn {
            out.extend_from_slice(&bn.gamma);
            out.extend_from_slice(&bn.beta);
        }
    }
    out
}

/// Inverse of [`trainable_params`].
pub fn set_trainable_params(weights: &mut WeightsBundle, params: &[f64]) -> Result<()> {
    let expected = trainable_params(weights).len();
    if params.len() != expected {
        return Err(Error::invalid(format!(
            "expected {expected} parameters, got {}",
            params.len()
        )));
    }
    let mut rest = params;
    let mut take = |dst: &mut [f64]| {
        let (head, tail) = rest.split_at(dst.len());
        dst.copy_from_slice(head);
        rest = tail;
    };
    for l in &mut weights.layers {
        take(&mut l.kernel);
        take(&mut l.bias);
        if let Some(bn) = &mut l.bn {
            take(&mut bn.gamma);
            take(&mut bn.beta);
        }
    }
    Ok(())
}

/// Per-layer forward values kept for the backward pass.
struct LayerCache {
    /// Layer input, one map per example.
    input: Vec<FeatureMap>,
    /// Normalized pre-affine activations (batch-norm layers only).
    xhat: Vec<FeatureMap>,
    /// Pre-ReLU output.
    pre: Vec<FeatureMap>,
    inv_std: Vec<f64>,
    /// Batch statistics (mean, biased variance) when in batch mode.
    stats: Option<(Vec<f64>, Vec<f64>)>,
}

pub(crate) struct Forward {
    caches: Vec<LayerCache>,
    pub(crate) output: Vec<FeatureMap>,
}

impl Forward {
    /// Batch mean and biased variance of every batch-norm layer.
    pub(crate) fn batch_stats(&self) -> impl Iterator<Item = (usize, &(Vec<f64>, Vec<f64>))> {
        self.caches
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.stats.as_ref().map(|s| (i, s)))
    }
}

fn to_map(s: &SeismicSection) -> FeatureMap {
    FeatureMap {
        channels: 1,
        height: s.n_channels(),
        width: s.n_time(),
        data: s.to_vector(),
    }
}

fn channel_stats(maps: &[FeatureMap], c: usize) -> (f64, f64) {
    let n = (maps.len() * maps[0].plane_len()) as f64;
    let mean = maps.iter().map(|m| m.plane(c).iter().sum::<f64>()).sum::<f64>() / n;
    let var = maps
        .iter()
        .map(|m| m.plane(c).iter().map(|v| (v - mean).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    (mean, var)
}

fn layer_forward(layer: &LayerSpec, input: Vec<FeatureMap>, mode: BnMode) -> (LayerCache, Vec<FeatureMap>) {
    let mut pre: Vec<FeatureMap> = input
        .par_iter()
        .map(|x| conv_raw(x, &layer.kernel, &layer.bias, layer.out_ch))
        .collect();
    let mut xhat = Vec::new();
    let mut inv_std = Vec::new();
    let mut stats = None;
    if let Some(bn) = &layer.bn {
        let (means, vars): (Vec<f64>, Vec<f64>) = match mode {
            BnMode::Frozen => (bn.running_mean.clone(), bn.running_var.clone()),
            BnMode::Batch => (0..layer.out_ch).map(|c| channel_stats(&pre, c)).unzip(),
        };
        inv_std = vars.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
        xhat = pre.clone();
        for (xh, z) in xhat.iter_mut().zip(pre.iter_mut()) {
            for c in 0..layer.out_ch {
                let (mu, is, g, b) = (means[c], inv_std[c], bn.gamma[c], bn.beta[c]);
                for (h, v) in xh.plane_mut(c).iter_mut().zip(z.plane_mut(c)) {
                    *h = (*h - mu) * is;
                    *v = g * *h + b;
                }
            }
        }
        if mode == BnMode::Batch {
            stats = Some((means, vars));
        }
    }
    let mut out = pre.clone();
    if layer.kind != LayerKind::Conv {
        for m in &mut out {
            for v in &mut m.data {
                // Subgradient 0 at 0.
                if *v <= 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    let cache = LayerCache {
        input,
        xhat,
        pre,
        inv_std,
        stats,
    };
    (cache, out)
}

pub(crate) fn forward(weights: &WeightsBundle, inputs: &[SeismicSection], mode: BnMode) -> Forward {
    let mut x: Vec<FeatureMap> = inputs.iter().map(to_map).collect();
    let mut caches = Vec::with_capacity(weights.layers.len());
    for layer in &weights.layers {
        let (cache, out) = layer_forward(layer, x, mode);
        caches.push(cache);
        x = out;
    }
    Forward { caches, output: x }
}

/// Convolution backward for one example: returns `(dK, db, dX)`.
fn conv_backward(layer: &LayerSpec, x: &FeatureMap, dz: &FeatureMap, need_dx: bool) -> (Vec<f64>, Vec<f64>, FeatureMap) {
    let (h, w) = (x.height, x.width);
    let mut dk = vec![0.0; layer.kernel.len()];
    let mut db = vec![0.0; layer.out_ch];
    let mut dx = FeatureMap::zeros(if need_dx { layer.in_ch } else { 0 }, h, w);
    for (o, db_o) in db.iter_mut().enumerate() {
        let g = dz.plane(o);
        *db_o = g.iter().sum();
        for i in 0..layer.in_ch {
            let base = (o * layer.in_ch + i) * 9;
            let src = x.plane(i);
            for k in 0..9 {
                dk[base + k] = shifted_dot(g, src, h, w, k / 3, k % 3);
            }
            if need_dx {
                let dst = dx.plane_mut(i);
                for k in 0..9 {
                    accumulate_shifted(dst, g, h, w, 2 - k / 3, 2 - k % 3, layer.kernel[base + k]);
                }
            }
        }
    }
    (dk, db, dx)
}

/// Backpropagates `d_out` (gradient w.r.t. the network output of each
/// example) through the cached forward pass.
pub(crate) fn backward(weights: &WeightsBundle, fwd: Forward, d_out: Vec<FeatureMap>, mode: BnMode) -> Gradients {
    let mut grads = Gradients::zeros_like(weights);
    let mut delta = d_out;
    for (li, (layer, cache)) in weights.layers.iter().zip(fwd.caches).enumerate().rev() {
        if layer.kind != LayerKind::Conv {
            for (d, p) in delta.iter_mut().zip(&cache.pre) {
                for (dv, pv) in d.data.iter_mut().zip(&p.data) {
                    if *pv <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
        }
        if let Some(bn) = &layer.bn {
            let g = &mut grads.layers[li];
            for c in 0..layer.out_ch {
                let mut dgamma = 0.0;
                let mut dbeta = 0.0;
                for (d, xh) in delta.iter().zip(&cache.xhat) {
                    for (dv, hv) in d.plane(c).iter().zip(xh.plane(c)) {
                        dgamma += dv * hv;
                        dbeta += dv;
                    }
                }
                g.gamma[c] = dgamma;
                g.beta[c] = dbeta;
                let scale = bn.gamma[c] * cache.inv_std[c];
                match mode {
                    BnMode::Frozen => {
                        for d in delta.iter_mut() {
                            for v in d.plane_mut(c) {
                                *v *= scale;
                            }
                        }
                    }
                    BnMode::Batch => {
                        // dZ = g inv_std (dY - mean(dY) - xhat mean(dY xhat))
                        let n = (delta.len() * delta[0].plane_len()) as f64;
                        let mean_d = dbeta / n;
                        let mean_dx = dgamma / n;
                        for (d, xh) in delta.iter_mut().zip(&cache.xhat) {
                            for (v, hv) in d.plane_mut(c).iter_mut().zip(xh.plane(c)) {
                                *v = scale * (*v - mean_d - hv * mean_dx);
                            }
                        }
                    }
                }
            }
        }
        let need_dx = li > 0;
        let per_example: Vec<(Vec<f64>, Vec<f64>, FeatureMap)> = cache
            .input
            .par_iter()
            .zip(delta.par_iter())
            .map(|(x, dz)| conv_backward(layer, x, dz, need_dx))
            .collect();
        let g = &mut grads.layers[li];
        let mut next = Vec::with_capacity(per_example.len());
        // Fixed summation order over examples.
        for (dk, db, dx) in per_example {
            for (a, b) in g.kernel.iter_mut().zip(&dk) {
                *a += b;
            }
            for (a, b) in g.bias.iter_mut().zip(&db) {
                *a += b;
            }
            next.push(dx);
        }
        delta = next;
    }
    grads
}

fn check_batch(batch: &[TrainingPair]) -> Result<()> {
    let first = batch
        .first()
        .ok_or_else(|| Error::invalid("training batch is empty"))?;
    for p in batch {
        p.noisy.check_same_shape(&first.noisy)?;
        p.clean.check_same_shape(&first.noisy)?;
    }
    Ok(())
}

/// `(loss, d loss / d output)` for the residual-learning objective.
fn residual_loss(fwd: &Forward, batch: &[TrainingPair]) -> (f64, Vec<FeatureMap>) {
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut d_out = Vec::with_capacity(batch.len());
    for (out, pair) in fwd.output.iter().zip(batch) {
        let mut d = out.clone();
        for ((dv, m), s) in d.data.iter_mut().zip(pair.noisy.samples()).zip(pair.clean.samples()) {
            let e = *dv - (m - s);
            loss += e * e;
            *dv = e / n;
        }
        d_out.push(d);
    }
    (loss / (2.0 * n), d_out)
}

/// `(1 / 2N) sum_j |L(m_j) - (m_j - s_j)|^2` with running batch-norm
/// statistics.
pub fn training_loss(weights: &WeightsBundle, batch: &[TrainingPair]) -> Result<f64> {
    batch_loss(weights, batch, BnMode::Frozen)
}

pub fn batch_loss(weights: &WeightsBundle, batch: &[TrainingPair], mode: BnMode) -> Result<f64> {
    check_batch(batch)?;
    let inputs: Vec<SeismicSection> = batch.iter().map(|p| p.noisy.clone()).collect();
    let fwd = forward(weights, &inputs, mode);
    Ok(residual_loss(&fwd, batch).0)
}

/// Exact gradient of [`training_loss`] with respect to kernels, biases and
/// the batch-norm affine parameters.
pub fn loss_gradient(weights: &WeightsBundle, batch: &[TrainingPair]) -> Result<Gradients> {
    Ok(loss_and_gradient(weights, batch, BnMode::Frozen)?.1)
}

/// Batch statistics of one batch-norm layer: `(layer, mean, variance)`.
pub(crate) type BatchStats = Vec<(usize, Vec<f64>, Vec<f64>)>;

/// Loss, gradient and the forward pass (for running-statistic updates).
pub(crate) fn loss_and_gradient_with_stats(
    weights: &WeightsBundle,
    batch: &[TrainingPair],
    mode: BnMode,
) -> Result<(f64, Gradients, BatchStats)> {
    check_batch(batch)?;
    let inputs: Vec<SeismicSection> = batch.iter().map(|p| p.noisy.clone()).collect();
    let mut fwd = forward(weights, &inputs, mode);
    let (loss, d_out) = residual_loss(&fwd, batch);
    let stats = fwd
        .batch_stats()
        .map(|(i, (m, v))| (i, m.clone(), v.clone()))
        .collect();
    fwd.output.clear();
    Ok((loss, backward(weights, fwd, d_out, mode), stats))
}

pub fn loss_and_gradient(weights: &WeightsBundle, batch: &[TrainingPair], mode: BnMode) -> Result<(f64, Gradients)> {
    let (loss, grads, _) = loss_and_gradient_with_stats(weights, batch, mode)?;
    Ok((loss, grads))
}

/// Sum of per-example gradients; the reduction order is the batch order.
pub fn sum_gradients(parts: &[Gradients]) -> Option<Gradients> {
    let mut it = parts.iter();
    let mut acc = it.next()?.clone();
    for g in it {
        acc.add_assign(g);
    }
    Some(acc)
}
