//! MFCC from the textbook definition, with plain loops and a direct DFT.
//!
//! pre-emphasis → Hamming-windowed frames → |DFT|² → triangular HTK-mel
//! filters (peak-normalized) → natural log with a floor → orthonormal
//! DCT-II → mean over frames.

use std::f64::consts::PI;

use super::dft::direct_dft;

#[derive(Debug, Clone, Copy)]
pub struct MfccSpec {
    pub fs: f64,
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MfccSpec {
    fn default() -> Self {
        Self { fs: 1000.0, frame_len: 256, hop: 64, n_mels: 64, n_coeffs: 52, f_min: 0.0, f_max: 500.0, pre_emphasis: 0.97, log_floor: 1e-10 }
    }
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

pub struct MfccOutput {
    pub coeffs: Vec<f64>,
    pub n_frames: usize,
    /// `[frame][mel]` log energies.
    pub log_mel: Vec<Vec<f64>>,
}

pub fn direct_mfcc(x: &[f64], s: &MfccSpec) -> MfccOutput {
    let y: Vec<f64> = (0..x.len()).map(|i| if i == 0 { x[0] } else { x[i] - s.pre_emphasis * x[i - 1] }).collect();
    let n = s.frame_len;
    let n_frames = (y.len() - n) / s.hop + 1;
    let n_bins = n / 2 + 1;

    let mel_lo = mel(s.f_min);
    let mel_hi = mel(s.f_max);
    let edges: Vec<f64> = (0..s.n_mels + 2).map(|i| inv_mel(mel_lo + (mel_hi - mel_lo) * i as f64 / (s.n_mels + 1) as f64)).collect();
    let mut filters = vec![vec![0.0; n_bins]; s.n_mels];
    for (m, filt) in filters.iter_mut().enumerate() {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, w) in filt.iter_mut().enumerate() {
            let f = k as f64 * s.fs / n as f64;
            if lo < f && f <= c {
                *w = (f - lo) / (c - lo);
            } else if c < f && f < hi {
                *w = (hi - f) / (hi - c);
            }
        }
        let peak = filt.iter().cloned().fold(0.0, f64::max);
        for w in filt.iter_mut() {
            *w /= peak;
        }
    }

    let mut log_mel = Vec::with_capacity(n_frames);
    for fi in 0..n_frames {
        let frame: Vec<f64> =
            (0..n).map(|i| y[fi * s.hop + i] * (0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())).collect();
        let spec = direct_dft(&frame);
        let power: Vec<f64> = spec[..n_bins].iter().map(|c| c.re * c.re + c.im * c.im).collect();
        log_mel.push(filters.iter().map(|filt| filt.iter().zip(&power).map(|(w, p)| w * p).sum::<f64>().max(s.log_floor).ln()).collect::<Vec<f64>>());
    }

    let m = s.n_mels as f64;
    let mut coeffs = vec![0.0; s.n_coeffs];
    for row in &log_mel {
        for (k, c) in coeffs.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            let v: f64 = row.iter().enumerate().map(|(i, e)| e * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * m)).cos()).sum();
            *c += scale * v;
        }
    }
    for c in &mut coeffs {
        *c /= n_frames as f64;
    }
    MfccOutput { coeffs, n_frames, log_mel }
}
