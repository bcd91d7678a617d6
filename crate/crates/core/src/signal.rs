//! Waveform conditioning: band-pass filtering, resampling, length
//! standardization, peak normalization and augmentation.
//!
//! The canonical chain is [`preprocess`]: filter at the native rate, resample
//! to 1 kHz, keep the first 2500 samples, scale to a unit peak.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// A mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    pub samples: Vec<T>,
    pub sample_rate_hz: u32,
    pub source_id: Option<String>,
}

impl<T: Scalar> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate_hz: u32) -> Self {
        Self { samples, sample_rate_hz, source_id: None }
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Mean power, `Σx²/N`.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&x| x.to_f64_lossy().powi(2)).sum::<f64>() / self.samples.len() as f64
    }

    fn map_samples(&self, samples: Vec<T>) -> Self {
        Self { samples, sample_rate_hz: self.sample_rate_hz, source_id: self.source_id.clone() }
    }

    pub fn cast<U: Scalar>(&self) -> AudioClip<U> {
        AudioClip {
            samples: crate::num::cast_vec(&self.samples),
            sample_rate_hz: self.sample_rate_hz,
            source_id: self.source_id.clone(),
        }
    }
}

/// One second-order section, `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad<T> {
    pub b0: T,
    pub b1: T,
    pub b2: T,
    pub a1: T,
    pub a2: T,
}

impl<T: Scalar> Biquad<T> {
    /// Complex response at normalized angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b0.to_f64_lossy() + z1 * self.b1.to_f64_lossy() + z2 * self.b2.to_f64_lossy();
        let den = 1.0 + z1 * self.a1.to_f64_lossy() + z2 * self.a2.to_f64_lossy();
        num / den
    }

    /// Magnitudes of the two poles, the roots of `z² + a1 z + a2`.
    pub fn pole_radii(&self) -> [f64; 2] {
        let a1 = self.a1.to_f64_lossy();
        let a2 = self.a2.to_f64_lossy();
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [((-a1 + disc) / 2.0).norm(), ((-a1 - disc) / 2.0).norm()]
    }
}

/// Cascade of biquads, valid only at the rate it was designed for.
#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade<T> {
    pub sections: Vec<Biquad<T>>,
    pub design_fs_hz: u32,
}

impl<T: Scalar> BiquadCascade<T> {
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / self.design_fs_hz as f64;
        self.sections.iter().map(|s| s.response(omega)).product()
    }

    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|s| s.pole_radii().iter().all(|&r| r < 1.0))
    }
}

/// Order-2 Butterworth band-pass as two biquads.
///
/// The low-pass prototype poles are mapped through the band transform with
/// both corners prewarped, then discretized with the bilinear transform.
/// Each section carries zeros at z = 1 and z = −1 and is scaled to unit
/// magnitude at the digital image of the geometric center, where the analog
/// response is exactly 1.
pub fn design_bandpass<T: Scalar>(low_hz: f64, high_hz: f64, fs_hz: u32) -> Result<BiquadCascade<T>> {
    let fs = fs_hz as f64;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::config(format!(
            "band-pass corners must satisfy 0 < low < high < fs/2, got low={low_hz} high={high_hz} fs={fs_hz}"
        )));
    }
    let fs2 = 2.0 * fs;
    let wl = fs2 * (PI * low_hz / fs).tan();
    let wh = fs2 * (PI * high_hz / fs).tan();
    let w0_sq = wl * wh;
    let bw = wh - wl;

    // Upper prototype pole; its conjugate yields the conjugate section poles.
    let proto = Complex64::from_polar(1.0, 3.0 * PI / 4.0);
    let half = proto * bw / 2.0;
    let root = (half * half - w0_sq).sqrt();
    let analog_poles = [half + root, half - root];

    let center_omega = 2.0 * (w0_sq.sqrt() / fs2).atan();
    let sections = analog_poles
        .iter()
        .map(|&s| {
            let zd = (fs2 + s) / (fs2 - s);
            let mut sec = Biquad::<f64> { b0: 1.0, b1: 0.0, b2: -1.0, a1: -2.0 * zd.re, a2: zd.norm_sqr() };
            let g = 1.0 / sec.response(center_omega).norm();
            sec.b0 *= g;
            sec.b2 *= g;
            Biquad { b0: T::lit(sec.b0), b1: T::lit(sec.b1), b2: T::lit(sec.b2), a1: T::lit(sec.a1), a2: T::lit(sec.a2) }
        })
        .collect();

    let cascade = BiquadCascade { sections, design_fs_hz: fs_hz };
    debug_assert!(cascade.is_stable());
    Ok(cascade)
}

/// Causal single-pass filtering with zeroed section state (transposed direct form II).
pub fn apply_filter<T: Scalar>(clip: &AudioClip<T>, cascade: &BiquadCascade<T>) -> Result<AudioClip<T>> {
    if clip.sample_rate_hz != cascade.design_fs_hz {
        return Err(Error::RateMismatch { clip_hz: clip.sample_rate_hz, design_hz: cascade.design_fs_hz });
    }
    let mut y = clip.samples.clone();
    for s in &cascade.sections {
        let (mut z1, mut z2) = (T::zero(), T::zero());
        for v in y.iter_mut() {
            let x = *v;
            let out = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * out + z2;
            z2 = s.b2 * x - s.a2 * out;
            *v = out;
        }
    }
    Ok(clip.map_samples(y))
}

/// Linear-interpolation resampler. Output length is `round(len · target / source)`.
///
/// No anti-alias stage of its own: callers band-limit first.
pub fn resample<T: Scalar>(clip: &AudioClip<T>, target_fs_hz: u32) -> Result<AudioClip<T>> {
    if target_fs_hz == 0 {
        return Err(Error::config("target sample rate must be positive"));
    }
    let src = clip.sample_rate_hz as u64;
    let dst = target_fs_hz as u64;
    if src == dst {
        return Ok(clip.clone());
    }
    if src == 0 {
        return Err(Error::config("source sample rate must be positive"));
    }
    let n = clip.samples.len();
    let out_len = ((n as u64 * dst) as f64 / src as f64).round() as usize;
    let x = &clip.samples;
    let samples = (0..out_len as u64)
        .map(|i| {
            // Source position i·src/dst, split exactly into integer and fraction.
            let num = i * src;
            let idx = (num / dst) as usize;
            if idx + 1 >= n {
                return x[n - 1];
            }
            let frac = T::lit((num % dst) as f64 / dst as f64);
            x[idx] + frac * (x[idx + 1] - x[idx])
        })
        .collect();
    Ok(AudioClip { samples, sample_rate_hz: target_fs_hz, source_id: clip.source_id.clone() })
}

/// Keep the first `n` samples; zero-pad short clips at the tail.
pub fn standardize_length<T: Scalar>(clip: &AudioClip<T>, n: usize) -> AudioClip<T> {
    let mut samples = clip.samples.clone();
    samples.resize(n, T::zero());
    clip.map_samples(samples)
}

/// Scale so the largest magnitude is 1. An all-zero clip is returned as is.
pub fn normalize_peak<T: Scalar>(clip: &AudioClip<T>) -> AudioClip<T> {
    let peak = clip.peak();
    if peak == T::zero() {
        return clip.clone();
    }
    clip.map_samples(clip.samples.iter().map(|&x| x / peak).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentKind {
    /// Additive white Gaussian noise at the given SNR.
    Noise { snr_db: f64 },
    /// Circular shift; positive values move samples later in time.
    TimeShift { samples: i64 },
    /// Time-axis rescale. Factors above 1 play faster and raise pitch.
    Speed { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    #[serde(flatten)]
    pub kind: AugmentKind,
    pub seed: u64,
}

pub const SNR_RANGE_DB: (f64, f64) = (15.0, 30.0);
pub const SPEED_RANGE: (f64, f64) = (0.9, 1.1);
/// Largest random shift as a fraction of the clip length.
pub const MAX_SHIFT_FRACTION: f64 = 0.1;

impl AugmentSpec {
    pub fn noise(snr_db: f64, seed: u64) -> Self {
        Self { kind: AugmentKind::Noise { snr_db }, seed }
    }

    pub fn time_shift(samples: i64) -> Self {
        Self { kind: AugmentKind::TimeShift { samples }, seed: 0 }
    }

    pub fn speed(factor: f64) -> Self {
        Self { kind: AugmentKind::Speed { factor }, seed: 0 }
    }

    /// Draw a transform uniformly among the three kinds with parameters in
    /// the default ranges.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, clip_len: usize) -> Self {
        let seed = rng.random();
        let kind = match rng.random_range(0..3) {
            0 => AugmentKind::Noise { snr_db: rng.random_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1) },
            1 => {
                let max = ((clip_len as f64 * MAX_SHIFT_FRACTION) as i64).max(1);
                AugmentKind::TimeShift { samples: rng.random_range(-max..=max) }
            }
            _ => AugmentKind::Speed { factor: rng.random_range(SPEED_RANGE.0..=SPEED_RANGE.1) },
        };
        Self { kind, seed }
    }

    pub fn validate(&self, clip_len: usize) -> Result<()> {
        match self.kind {
            AugmentKind::Noise { snr_db } if !snr_db.is_finite() => {
                Err(Error::config(format!("noise SNR must be finite, got {snr_db}")))
            }
            AugmentKind::TimeShift { samples } if samples.unsigned_abs() as usize >= clip_len.max(1) => {
                Err(Error::config(format!("shift of {samples} samples is not smaller than the clip length {clip_len}")))
            }
            AugmentKind::Speed { factor } if !(SPEED_RANGE.0..=SPEED_RANGE.1).contains(&factor) => Err(
                Error::config(format!("speed factor {factor} outside [{}, {}]", SPEED_RANGE.0, SPEED_RANGE.1)),
            ),
            _ => Ok(()),
        }
    }
}

/// Apply one augmentation. Deterministic given the spec (including its seed);
/// output length equals input length.
pub fn augment<T: Scalar>(clip: &AudioClip<T>, spec: &AugmentSpec) -> Result<AudioClip<T>> {
    if clip.is_empty() {
        return Err(Error::config("cannot augment an empty clip"));
    }
    spec.validate(clip.len())?;
    let n = clip.len();
    match spec.kind {
        AugmentKind::Noise { snr_db } => {
            let signal_power = clip.power();
            if signal_power == 0.0 {
                return Ok(clip.clone());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let raw_power = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
            // Rescale the draw so the realized SNR is exact.
            let target_power = signal_power / 10f64.powf(snr_db / 10.0);
            let scale = (target_power / raw_power).sqrt();
            let samples = clip.samples.iter().zip(&noise).map(|(&x, &e)| x + T::lit(e * scale)).collect();
            Ok(clip.map_samples(samples))
        }
        AugmentKind::TimeShift { samples } => {
            let mut out = clip.samples.clone();
            let k = samples.unsigned_abs() as usize % n;
            if samples >= 0 {
                out.rotate_right(k);
            } else {
                out.rotate_left(k);
            }
            Ok(clip.map_samples(out))
        }
        AugmentKind::Speed { factor } => {
            let new_len = ((n as f64 / factor).round() as usize).max(1);
            let x = &clip.samples;
            let stretched = (0..new_len)
                .map(|i| {
                    let pos = i as f64 * factor;
                    let idx = pos.floor() as usize;
                    if idx + 1 >= n {
                        return x[n - 1];
                    }
                    let frac = T::lit(pos - idx as f64);
                    x[idx] + frac * (x[idx + 1] - x[idx])
                })
                .collect();
            Ok(standardize_length(&clip.map_samples(stretched), n))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub target_fs_hz: u32,
    pub target_len_samples: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { low_cut_hz: 25.0, high_cut_hz: 400.0, target_fs_hz: 1000, target_len_samples: 2500 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.target_fs_hz as f64 / 2.0;
        if !(self.low_cut_hz > 0.0 && self.low_cut_hz < self.high_cut_hz && self.high_cut_hz < nyquist) {
            return Err(Error::config(format!(
                "need 0 < low_cut ({}) < high_cut ({}) < target_fs/2 ({nyquist})",
                self.low_cut_hz, self.high_cut_hz
            )));
        }
        if self.target_len_samples == 0 {
            return Err(Error::config("target length must be positive"));
        }
        Ok(())
    }
}

/// Filter → resample → truncate/pad → normalize.
pub fn preprocess<T: Scalar>(raw: &AudioClip<T>, cfg: &PreprocessConfig) -> Result<AudioClip<T>> {
    cfg.validate()?;
    let min_hz = (2.0 * cfg.high_cut_hz).ceil() as u32;
    if (raw.sample_rate_hz as f64) <= 2.0 * cfg.high_cut_hz {
        return Err(Error::UnsupportedRate { rate_hz: raw.sample_rate_hz, min_hz });
    }
    if raw.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let cascade = design_bandpass(cfg.low_cut_hz, cfg.high_cut_hz, raw.sample_rate_hz)?;
    let filtered = apply_filter(raw, &cascade)?;
    let resampled = resample(&filtered, cfg.target_fs_hz)?;
    let trimmed = standardize_length(&resampled, cfg.target_len_samples);
    Ok(normalize_peak(&trimmed))
}
