//! Synthetic sections made of linear events.
//!
//! Each event is a Ricker wavelet whose arrival moves linearly across
//! channels, `t(c) = intercept + slope * c`. Amplitudes are drawn from
//! `[0.5, 1.5]` with a random sign, slopes from `[-1, 1]` samples per channel
//! and intercepts from `[0, n_time)`. The summed section is scaled to unit
//! RMS.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SeedRng};
use crate::signal::{rms, SeismicSection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    /// Arrival time at channel 0, in samples.
    pub intercept: f64,
    /// Moveout in samples per channel.
    pub slope: f64,
    pub amplitude: f64,
    /// Wavelet peak frequency as a fraction of Nyquist.
    pub peak_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_channels: usize,
    pub n_time: usize,
    pub n_events: usize,
    pub peak_freq: f64,
    pub wavelet_len: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_channels: 32,
            n_time: 32,
            n_events: 4,
            peak_freq: 0.2,
            wavelet_len: 31,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 8 || self.n_time < 8 {
            return Err(Error::invalid(format!(
                "synthetic sections need at least 8x8 samples, got {}x{}",
                self.n_channels, self.n_time
            )));
        }
        if self.n_events == 0 {
            return Err(Error::invalid("need at least one event"));
        }
        if self.wavelet_len == 0 {
            return Err(Error::invalid("wavelet length must be positive"));
        }
        check_peak_freq(self.peak_freq)
    }
}

fn check_peak_freq(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 0.5) {
        return Err(Error::invalid(format!(
            "peak frequency must lie in (0, 0.5) of Nyquist, got {f}"
        )));
    }
    Ok(())
}

/// Ricker wavelet with `peak_freq` given as a fraction of Nyquist, centered
/// in `n_samples` samples.
pub fn ricker_wavelet(peak_freq: f64, n_samples: usize) -> Result<Vec<f64>> {
    check_peak_freq(peak_freq)?;
    // cycles per sample
    let f = 0.5 * peak_freq;
    let center = (n_samples as f64 - 1.0) / 2.0;
    let a = std::f64::consts::PI * std::f64::consts::PI * f * f;
    Ok((0..n_samples)
        .map(|i| {
            let t = i as f64 - center;
            (1.0 - 2.0 * a * t * t) * (-a * t * t).exp()
        })
        .collect())
}

fn sample_wavelet(w: &[f64], pos: f64) -> f64 {
    if pos < 0.0 || pos > (w.len() - 1) as f64 {
        return 0.0;
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= w.len() {
        return w[i];
    }
    w[i] * (1.0 - frac) + w[i + 1] * frac
}

/// Sums the given events onto an `n_channels x n_time` grid (no
/// normalization).
pub fn render_events(
    n_channels: usize,
    n_time: usize,
    events: &[EventSpec],
    wavelet_len: usize,
) -> Result<SeismicSection> {
    let mut data = vec![0.0; n_channels * n_time];
    for ev in events {
        let w = ricker_wavelet(ev.peak_freq, wavelet_len)?;
        let center = (wavelet_len as f64 - 1.0) / 2.0;
        for c in 0..n_channels {
            let arrival = ev.intercept + ev.slope * c as f64;
            let row = &mut data[c * n_time..(c + 1) * n_time];
            for (t, v) in row.iter_mut().enumerate() {
                *v += ev.amplitude * sample_wavelet(&w, t as f64 - arrival + center);
            }
        }
    }
    SeismicSection::new(n_channels, n_time, data)
}

pub fn generate_section_with(
    params: &SynthParams,
    rng: &mut SeedRng,
) -> Result<(SeismicSection, Vec<EventSpec>)> {
    params.validate()?;
    let events: Vec<EventSpec> = (0..params.n_events)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            EventSpec {
                intercept: rng.random_range(0.0..params.n_time as f64),
                slope: rng.random_range(-1.0..=1.0),
                amplitude: sign * rng.random_range(0.5..=1.5),
                peak_freq: params.peak_freq,
            }
        })
        .collect();
    let raw = render_events(params.n_channels, params.n_time, &events, params.wavelet_len)?;
    let a = rms(raw.samples());
    if a == 0.0 {
        return Err(Error::invalid("generated section is identically zero"));
    }
    let section = raw.map(|v| v / a)?;
    let events = events
        .into_iter()
        .map(|e| EventSpec {
            amplitude: e.amplitude / a,
            ..e
        })
        .collect();
    Ok((section, events))
}

/// Unit-RMS section with `params.n_events` random linear events.
pub fn generate_section(
    params: &SynthParams,
    seed: u64,
) -> Result<(SeismicSection, Vec<EventSpec>)> {
    generate_section_with(params, &mut rng::from_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ricker_shape() {
        let w = ricker_wavelet(0.2, 31).unwrap();
        let peak = w.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(w[15], peak);
        assert!(w.iter().sum::<f64>().abs() <= 1e-3 * peak);
        for i in 0..31 {
            assert!((w[i] - w[30 - i]).abs() <= 1e-12);
        }
        assert!(ricker_wavelet(0.0, 31).is_err());
        assert!(ricker_wavelet(0.5, 31).is_err());
    }

    #[test]
    fn flat_event_gives_identical_traces() {
        let ev = EventSpec {
            intercept: 12.3,
            slope: 0.0,
            amplitude: 1.0,
            peak_freq: 0.2,
        };
        let s = render_events(8, 20, &[ev], 31).unwrap();
        let first = &s.samples()[..20];
        for c in 1..8 {
            assert_eq!(&s.samples()[c * 20..(c + 1) * 20], first);
        }
    }

    #[test]
    fn deterministic_and_unit_rms() {
        let p = SynthParams::default();
        let (a, ea) = generate_section(&p, 99).unwrap();
        let (b, eb) = generate_section(&p, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(ea, eb);
        assert_eq!(a.shape(), (32, 32));
        assert_eq!(ea.len(), 4);
        assert!((rms(a.samples()) - 1.0).abs() <= 1e-6);
        let (c, _) = generate_section(&p, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn draws_follow_documented_ranges() {
        let p = SynthParams {
            n_events: 50,
            ..SynthParams::default()
        };
        let (_, events) = generate_section(&p, 3).unwrap();
        for e in events {
            assert!((-1.0..=1.0).contains(&e.slope));
            assert!((0.0..32.0).contains(&e.intercept));
        }
    }

    #[test]
    fn rejects_small_grids() {
        let p = SynthParams {
            n_channels: 4,
            ..SynthParams::default()
        };
        assert!(generate_section(&p, 1).is_err());
        let p = SynthParams {
            n_events: 0,
            ..SynthParams::default()
        };
        assert!(generate_section(&p, 1).is_err());
    }
}
