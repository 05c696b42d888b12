use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SeismicSection;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_LH_EPSILON: f64 = 1e-3;

pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn energy(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum()
}

/// Quality of reconstruction in dB: `10 log10(|truth|^2 / |est - truth|^2)`.
///
/// The error energy uses the difference `est - truth`; a perfect estimate
/// returns `+inf`.
pub fn quality_q(est: &SeismicSection, truth: &SeismicSection) -> Result<f64> {
    est.check_same_shape(truth)?;
    let signal = energy(truth.samples().iter().copied());
    if signal == 0.0 {
        return Err(Error::invalid("quality_q: truth is identically zero"));
    }
    let err = energy(est.samples().iter().zip(truth.samples()).map(|(a, b)| a - b));
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

/// Noise realization parameters. `snr` is the linear power ratio
/// `a_rms^2 / sigma_sq` with `a_rms` the clean signal's RMS; `sigma_sq` is
/// the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr: f64,
    pub sigma_sq: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn for_signal(clean: &[f64], snr: f64, seed: u64) -> Result<Self> {
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::invalid(format!("snr must be positive, got {snr}")));
        }
        let a_rms = rms(clean);
        if a_rms == 0.0 {
            return Err(Error::invalid("clean signal is identically zero"));
        }
        Ok(Self {
            snr,
            sigma_sq: a_rms * a_rms / snr,
            seed,
        })
    }
}

/// Noise vector for `clean` at the requested SNR, drawn from `rng`.
/// Returns the noise and its variance.
pub fn gaussian_noise_for_snr<R: Rng + ?Sized>(
    clean: &[f64],
    snr: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let spec = NoiseSpec::for_signal(clean, snr, 0)?;
    Ok((rng::gaussian_vec(rng, clean.len(), spec.sigma_sq), spec.sigma_sq))
}

/// Adds white Gaussian noise of variance `a_rms^2 / snr` to `clean`.
pub fn add_noise_for_snr(
    clean: &SeismicSection,
    snr: f64,
    seed: u64,
) -> Result<(SeismicSection, NoiseSpec)> {
    let spec = NoiseSpec::for_signal(clean.samples(), snr, seed)?;
    let mut r = rng::from_seed(seed);
    let noise = rng::gaussian_vec(&mut r, clean.len(), spec.sigma_sq);
    let noisy: Vec<f64> = clean.samples().iter().zip(&noise).map(|(s, n)| s + n).collect();
    Ok((
        SeismicSection::new(clean.n_channels(), clean.n_time(), noisy)?,
        spec,
    ))
}

/// Local homogeneity factor of a residual operator `L`:
/// `|L(s + eps s) - (1 + eps) L(s)|^2 / |L(s)|^2`.
pub fn lh_factor<F>(residual: F, s: &SeismicSection, epsilon: f64) -> Result<f64>
where
    F: Fn(&SeismicSection) -> Result<SeismicSection>,
{
    let base = residual(s)?;
    let denom = energy(base.samples().iter().copied());
    if denom == 0.0 {
        return Err(Error::UndefinedRatio("L(s) is identically zero".into()));
    }
    let scaled = s.map(|v| v + epsilon * v)?;
    let moved = residual(&scaled)?;
    let num = energy(
        moved
            .samples()
            .iter()
            .zip(base.samples())
            .map(|(a, b)| a - (1.0 + epsilon) * b),
    );
    Ok(num / denom)
}

/// One metric as emitted by the CLI and report writers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    #[serde(with = "crate::float_serde")]
    pub value: f64,
    pub seed: u64,
    pub params: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    fn sec(v: Vec<f64>) -> SeismicSection {
        let n = v.len();
        SeismicSection::new(1, n, v).unwrap()
    }

    #[test]
    fn q_perfect_is_infinite() {
        let t = sec(vec![1.0, -2.0, 0.5]);
        assert_eq!(quality_q(&t, &t).unwrap(), f64::INFINITY);
    }

    #[test]
    fn q_zero_estimate_is_zero_db() {
        let t = sec(vec![1.0, -2.0, 0.5]);
        let z = sec(vec![0.0; 3]);
        assert!(quality_q(&z, &t).unwrap().abs() < 1e-12);
    }

    #[test]
    fn q_twenty_db_example() {
        let t = sec(vec![1.0, 0.0]);
        let e = sec(vec![0.9, 0.0]);
        assert!((quality_q(&e, &t).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn q_errors() {
        let t = sec(vec![0.0, 0.0]);
        assert!(quality_q(&t, &t).is_err());
        let a = sec(vec![1.0, 0.0]);
        let b = sec(vec![1.0, 0.0, 0.0]);
        assert!(quality_q(&a, &b).is_err());
    }

    #[test]
    fn q_invariant_under_joint_permutation() {
        let mut r = rng::from_seed(5);
        let t: Vec<f64> = (0..64).map(|_| rng::standard_normal(&mut r)).collect();
        let e: Vec<f64> = t.iter().map(|x| x + 0.3 * rng::standard_normal(&mut r)).collect();
        let q0 = quality_q(&sec(e.clone()), &sec(t.clone())).unwrap();
        let mut idx: Vec<usize> = (0..64).collect();
        idx.shuffle(&mut r);
        let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let ep: Vec<f64> = idx.iter().map(|&i| e[i]).collect();
        let q1 = quality_q(&sec(ep), &sec(tp)).unwrap();
        assert!((q0 - q1).abs() < 1e-10);
    }

    #[test]
    fn q_decreases_with_noise_variance() {
        let mut r = rng::from_seed(9);
        let t: Vec<f64> = (0..4096).map(|_| rng::standard_normal(&mut r)).collect();
        let base: Vec<f64> = (0..4096).map(|_| rng::standard_normal(&mut r)).collect();
        let truth = sec(t.clone());
        let mut prev = f64::INFINITY;
        for k in 1..=25 {
            let sd = 0.05 * k as f64;
            let est = sec(t.iter().zip(&base).map(|(a, n)| a + sd * n).collect());
            let q = quality_q(&est, &truth).unwrap();
            assert!(q < prev, "level {k}: {q} !< {prev}");
            prev = q;
        }
    }

    #[test]
    fn noise_variance_follows_snr() {
        // Unit-rms clean signal.
        let clean = sec(vec![1.0, -1.0, 1.0, -1.0]);
        let spec = NoiseSpec::for_signal(clean.samples(), 4.0, 0).unwrap();
        assert!((spec.sigma_sq - 0.25).abs() < 1e-15);
        let spec = NoiseSpec::for_signal(&[2.0, -2.0], 1.0, 0).unwrap();
        assert!((spec.sigma_sq - 4.0).abs() < 1e-15);
        assert!(NoiseSpec::for_signal(&[0.0, 0.0], 1.0, 0).is_err());
        assert!(NoiseSpec::for_signal(&[1.0], 0.0, 0).is_err());
    }

    #[test]
    fn empirical_noise_variance_within_one_percent() {
        let n = 1_000_000;
        let clean = SeismicSection::new(1000, 1000, vec![1.0; n]).unwrap();
        let (noisy, spec) = add_noise_for_snr(&clean, 2.0, 42).unwrap();
        let noise: Vec<f64> = noisy.samples().iter().map(|v| v - 1.0).collect();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let var = noise.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / spec.sigma_sq - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn noise_is_reproducible_and_seeds_decorrelate() {
        let clean = SeismicSection::new(100, 100, vec![1.0; 10_000]).unwrap();
        let (a, _) = add_noise_for_snr(&clean, 1.0, 3).unwrap();
        let (b, _) = add_noise_for_snr(&clean, 1.0, 3).unwrap();
        assert_eq!(a, b);
        let (c, _) = add_noise_for_snr(&clean, 1.0, 4).unwrap();
        let na: Vec<f64> = a.samples().iter().map(|v| v - 1.0).collect();
        let nc: Vec<f64> = c.samples().iter().map(|v| v - 1.0).collect();
        let dot: f64 = na.iter().zip(&nc).map(|(x, y)| x * y).sum();
        let corr = dot / (energy(na.iter().copied()) * energy(nc.iter().copied())).sqrt();
        assert!(corr.abs() < 0.05, "corr {corr}");
    }

    fn smooth_linear(s: &SeismicSection) -> Result<SeismicSection> {
        let v = s.samples();
        let n = v.len();
        let out = (0..n)
            .map(|i| 0.5 * v[i] - 0.25 * v[(i + 1) % n] + 0.1 * v[(i + n - 1) % n])
            .collect();
        SeismicSection::new(s.n_channels(), s.n_time(), out)
    }

    #[test]
    fn lh_of_linear_operator_is_tiny() {
        let mut r = rng::from_seed(1);
        let s = sec((0..256).map(|_| rng::standard_normal(&mut r)).collect());
        let lh = lh_factor(smooth_linear, &s, 1e-3).unwrap();
        assert!(lh <= 1e-12, "lh {lh}");
    }

    #[test]
    fn lh_with_zero_epsilon_is_zero() {
        let s = sec(vec![0.3, -1.0, 2.0, 0.1]);
        let affine = |x: &SeismicSection| x.map(|v| v.max(0.0) + 0.2);
        assert_eq!(lh_factor(affine, &s, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn lh_undefined_for_zero_residual() {
        let s = sec(vec![1.0, 2.0]);
        let zero = |x: &SeismicSection| x.map(|_| 0.0);
        assert!(matches!(
            lh_factor(zero, &s, 1e-3),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn metric_record_serializes_infinity_as_string() {
        let rec = MetricRecord {
            metric: "q".into(),
            value: f64::INFINITY,
            seed: 1,
            params: serde_json::json!({"snr": 2.0}),
        };
        let text = serde_json::to_string(&rec).unwrap();
        assert!(text.contains("\"inf\""), "{text}");
        let back: MetricRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.value, f64::INFINITY);
    }
}
