//! Desk-scale training of the residual network: patch sampling over a
//! noise-variance band, hand-written backpropagation and Adam.

mod adam;
mod backprop;

use std::path::Path;

use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_update, AdamConfig, AdamState};
pub use backprop::{
    batch_loss, loss_and_gradient, loss_gradient, set_trainable_params, sum_gradients,
    trainable_params, training_loss, BnMode, Gradients, LayerGrad, TrainingPair,
};

use crate::denoiser::WeightsBundle;
use crate::error::{Error, Result};
use crate::rng::{self, SeedRng};
use crate::signal::{rms, SeismicSection};

/// Weight kept on the old running statistic in each batch-norm update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub depth: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optimizer steps per epoch. Without it an epoch is the number of
    /// batches needed to cover every non-overlapping patch of the corpus once.
    pub steps_per_epoch: Option<usize>,
    pub adam: AdamConfig,
    /// Noise variance interval relative to the mean power of the source
    /// section.
    pub noise_band: (f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            channels: 16,
            patch_size: 32,
            batch_size: 8,
            epochs: 1,
            steps_per_epoch: None,
            adam: AdamConfig::default(),
            noise_band: (0.125, 1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 3 {
            return Err(Error::invalid(format!("depth must be >= 3, got {}", self.depth)));
        }
        if self.channels == 0 || self.patch_size == 0 || self.batch_size == 0 {
            return Err(Error::invalid("channels, patch_size and batch_size must be positive"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::invalid("steps_per_epoch must be positive"));
        }
        let (lo, hi) = self.noise_band;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!("invalid noise band ({lo}, {hi})")));
        }
        self.adam.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Total optimizer steps for `corpus`.
    pub fn total_steps(&self, corpus: &[SeismicSection]) -> usize {
        let per_epoch = self.steps_per_epoch.unwrap_or_else(|| {
            let tiles: usize = corpus
                .iter()
                .map(|s| (s.n_channels() / self.patch_size) * (s.n_time() / self.patch_size))
                .sum();
            tiles.div_ceil(self.batch_size).max(1)
        });
        self.epochs * per_epoch
    }
}

fn usable(corpus: &[SeismicSection], patch: usize) -> Vec<&SeismicSection> {
    corpus
        .iter()
        .filter(|s| s.n_channels() >= patch && s.n_time() >= patch)
        .collect()
}

/// Draws `cfg.batch_size` pairs: a uniformly chosen section, a uniform crop
/// position and a noise variance uniform on `cfg.noise_band` times the
/// section's mean power.
pub fn sample_training_batch(
    corpus: &[SeismicSection],
    cfg: &TrainConfig,
    rng: &mut SeedRng,
) -> Result<Vec<TrainingPair>> {
    let p = cfg.patch_size;
    let sections = usable(corpus, p);
    if sections.is_empty() {
        return Err(Error::invalid(format!(
            "no corpus section is at least {p}x{p}"
        )));
    }
    let powers: Vec<f64> = sections.iter().map(|s| rms(s.samples()).powi(2)).collect();
    let (lo, hi) = cfg.noise_band;
    (0..cfg.batch_size)
        .map(|_| {
            let k = rng.random_range(0..sections.len());
            let s = sections[k];
            let r0 = rng.random_range(0..=s.n_channels() - p);
            let c0 = rng.random_range(0..=s.n_time() - p);
            let u: f64 = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let sigma_sq = u * powers[k];
            let mut clean = Vec::with_capacity(p * p);
            for r in r0..r0 + p {
                clean.extend_from_slice(&s.samples()[r * s.n_time() + c0..r * s.n_time() + c0 + p]);
            }
            let sd = sigma_sq.sqrt();
            let noisy: Vec<f64> = clean
                .iter()
                .map(|&v| v + sd * rng::standard_normal(rng))
                .collect();
            Ok(TrainingPair {
                noisy: SeismicSection::new(p, p, noisy)?,
                clean: SeismicSection::new(p, p, clean)?,
                sigma_sq,
            })
        })
        .collect()
}

/// Scales a pair by the RMS of its noisy member, the convention the
/// inference handle applies.
fn normalize(pair: &TrainingPair) -> Result<TrainingPair> {
    let a = rms(pair.noisy.samples());
    if a == 0.0 {
        return Ok(pair.clone());
    }
    Ok(TrainingPair {
        noisy: pair.noisy.map(|v| v / a)?,
        clean: pair.clean.map(|v| v / a)?,
        sigma_sq: pair.sigma_sq / (a * a),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub weights: WeightsBundle,
    /// Batch loss at every step, before that step's update.
    pub loss_history: Vec<f64>,
}

impl TrainOutput {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.loss_history.iter().enumerate() {
            out.push_str(&format!("{i},{l:?}\n"));
        }
        out
    }

    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        crate::atomic::write_atomic(path, self.loss_csv().as_bytes())
    }
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn smoothed(history: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(history.len());
    let mut acc = 0.0;
    for i in 0..history.len() {
        acc += history[i];
        if i >= w {
            acc -= history[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Minimizes the residual-learning loss with Adam, batch-statistics batch
/// norm and running-statistic momentum [`BN_MOMENTUM`].
pub fn train(cfg: &TrainConfig, corpus: &[SeismicSection]) -> Result<TrainOutput> {
    crate::workers::with_workers(|| train_in_pool(cfg, corpus))?
}

fn train_in_pool(cfg: &TrainConfig, corpus: &[SeismicSection]) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut weights = WeightsBundle::init(cfg.depth, cfg.channels, cfg.noise_band, cfg.seed)?;
    let steps = cfg.total_steps(corpus);
    if steps == 0 {
        return Ok(TrainOutput {
            weights,
            loss_history: Vec::new(),
        });
    }
    if usable(corpus, cfg.patch_size).is_empty() {
        return Err(Error::invalid(format!(
            "no corpus section is at least {0}x{0}",
            cfg.patch_size
        )));
    }
    let mut sampler = rng::stream(cfg.seed, 1);
    let mut params = trainable_params(&weights);
    let mut state = AdamState::new(params.len());
    let mut history = Vec::with_capacity(steps);
    for step in 0..steps {
        let batch: Vec<TrainingPair> = sample_training_batch(corpus, cfg, &mut sampler)?
            .iter()
            .map(normalize)
            .collect::<Result<_>>()?;
        let (loss, grads, stats) =
            backprop::loss_and_gradient_with_stats(&weights, &batch, BnMode::Batch)?;
        let flat = grads.flatten();
        if !loss.is_finite() || flat.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step });
        }
        history.push(loss);
        adam_update(&mut params, &flat, &mut state, &cfg.adam)?;
        set_trainable_params(&mut weights, &params)?;
        let n = (batch.len() * cfg.patch_size * cfg.patch_size) as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for (li, mean, var) in stats {
            let bn = weights.layers[li].bn.as_mut().expect("stats only exist for bn layers");
            for c in 0..mean.len() {
                bn.running_mean[c] = BN_MOMENTUM * bn.running_mean[c] + (1.0 - BN_MOMENTUM) * mean[c];
                bn.running_var[c] =
                    BN_MOMENTUM * bn.running_var[c] + (1.0 - BN_MOMENTUM) * var[c] * unbias;
            }
        }
        if (step + 1) % 100 == 0 {
            info!("step {}/{steps}: loss {loss:.6}", step + 1);
        }
    }
    weights.validate()?;
    Ok(TrainOutput {
        weights,
        loss_history: history,
    })
}
