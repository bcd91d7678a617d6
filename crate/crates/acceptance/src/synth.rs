//! Synthetic recordings: pure tones in white noise at an exact SNR.

use std::f64::consts::PI;

use ausc_core::{AudioClip, ClassLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const RAW_RATE_HZ: u32 = 4000;
pub const CLIP_SECS: f64 = 2.5;
pub const SNR_DB: f64 = 25.0;

/// Tone frequency for class `k`: 50, 80, …, 350 Hz.
pub fn class_frequency(k: usize) -> f64 {
    50.0 + 30.0 * k as f64
}

/// A tone with random phase and amplitude plus Gaussian noise scaled so the
/// realised signal-to-noise ratio is exactly `snr_db`.
pub fn noisy_tone(freq: f64, snr_db: f64, seed: u64) -> AudioClip<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (RAW_RATE_HZ as f64 * CLIP_SECS) as usize;
    let phase = rng.random_range(0.0..2.0 * PI);
    let amp = rng.random_range(0.3..0.6);
    let tone: Vec<f64> = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / RAW_RATE_HZ as f64 + phase).sin()).collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let p_sig = tone.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let p_noise = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let scale = (p_sig / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    AudioClip::new(tone.iter().zip(&noise).map(|(s, w)| s + scale * w).collect(), RAW_RATE_HZ)
}

/// `per_class` clips for each of the 11 classes; `offset` keeps separate
/// draws (train / validation / held-out) disjoint.
pub fn tone_corpus(per_class: usize, offset: u64) -> Vec<(AudioClip<f64>, ClassLabel)> {
    ClassLabel::ALL
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| (0..per_class).map(move |i| (noisy_tone(class_frequency(k), SNR_DB, offset + 1000 * k as u64 + i as u64), c)))
        .collect()
}
