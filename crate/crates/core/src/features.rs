//! MFCC feature extraction.
//!
//! pre-emphasis → overlapping Hamming frames → one-sided power spectrum →
//! triangular mel filterbank → natural log (floored) → orthonormal DCT-II →
//! first 52 coefficients averaged over frames.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::signal::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate_hz: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 1000,
            frame_len: 256,
            hop: 64,
            n_mels: 64,
            n_coeffs: 52,
            f_min_hz: 0.0,
            f_max_hz: 500.0,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Frames produced for a clip of `n` samples, if any.
    pub fn n_frames(&self, n: usize) -> Option<usize> {
        (n >= self.frame_len).then(|| (n - self.frame_len) / self.hop + 1)
    }
}

/// `y[0] = x[0]`, `y[n] = x[n] − α·x[n−1]`.
pub fn pre_emphasis<T: Scalar>(clip: &AudioClip<T>, alpha: T) -> AudioClip<T> {
    let x = &clip.samples;
    let samples = (0..x.len()).map(|i| if i == 0 { x[0] } else { x[i] - alpha * x[i - 1] }).collect();
    AudioClip { samples, sample_rate_hz: clip.sample_rate_hz, source_id: clip.source_id.clone() }
}

/// Symmetric Hamming window, `0.54 − 0.46·cos(2πn/(N−1))`.
pub fn hamming<T: Scalar>(n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::one()];
    }
    (0..n).map(|i| T::lit(0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())).collect()
}

/// Windowed frames, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix<T> {
    pub frames: Array2<T>,
    pub hop: usize,
}

impl<T> FrameMatrix<T> {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn frame_len(&self) -> usize {
        self.frames.ncols()
    }
}

pub fn frame_and_window<T: Scalar>(samples: &[T], frame_len: usize, hop: usize) -> Result<FrameMatrix<T>> {
    if hop == 0 || frame_len == 0 {
        return Err(Error::config("frame length and hop must be positive"));
    }
    if samples.len() < frame_len {
        return Err(Error::TooShort { len: samples.len(), min: frame_len });
    }
    let window = hamming::<T>(frame_len);
    let n_frames = (samples.len() - frame_len) / hop + 1;
    let frames = Array2::from_shape_fn((n_frames, frame_len), |(f, i)| samples[f * hop + i] * window[i]);
    Ok(FrameMatrix { frames, hop })
}

/// Cached forward FFT of a fixed length.
#[derive(Clone)]
pub struct PowerSpectrum<T: Scalar> {
    fft: Arc<dyn Fft<T>>,
    len: usize,
}

impl<T: Scalar> std::fmt::Debug for PowerSpectrum<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PowerSpectrum").field("len", &self.len).finish()
    }
}

impl<T: Scalar> PowerSpectrum<T> {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        Self { fft, len }
    }

    /// Full complex spectrum of one frame.
    pub fn spectrum(&self, frame: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = frame.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.fft.process(&mut buf);
        buf
    }

    /// `|X[k]|²` for `k = 0..=len/2`, one row per frame.
    pub fn compute(&self, frames: &FrameMatrix<T>) -> Result<Array2<T>> {
        if frames.frame_len() != self.len {
            return Err(Error::shape(format!("frame length {} does not match FFT length {}", frames.frame_len(), self.len)));
        }
        let n_bins = self.len / 2 + 1;
        let mut out = Array2::zeros((frames.n_frames(), n_bins));
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.len];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft.get_inplace_scratch_len()];
        for (row, mut dst) in frames.frames.rows().into_iter().zip(out.rows_mut()) {
            for (b, &x) in buf.iter_mut().zip(row.iter()) {
                *b = Complex::new(x, T::zero());
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (d, c) in dst.iter_mut().zip(&buf) {
                *d = c.norm_sqr();
            }
        }
        Ok(out)
    }
}

/// One-sided power spectrum of every frame.
pub fn power_spectrum<T: Scalar>(frames: &FrameMatrix<T>) -> Result<Array2<T>> {
    PowerSpectrum::new(frames.frame_len()).compute(frames)
}

/// HTK mel scale, `2595·log10(1 + f/700)`.
pub fn hz_to_mel(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::Domain(format!("frequency must be non-negative, got {f}")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::Domain(format!("mel value must be non-negative, got {m}")));
    }
    Ok(700.0 * (10f64.powf(m / 2595.0) - 1.0))
}

/// Triangular filters on the mel axis, one row per filter, each peak-normalized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterBank<T> {
    pub weights: Array2<T>,
    pub center_freqs_hz: Vec<f64>,
}

pub fn build_mel_filterbank<T: Scalar>(
    n_mels: usize,
    n_bins: usize,
    fs_hz: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterBank<T>> {
    if n_mels < 2 || n_bins < 2 {
        return Err(Error::config(format!("need at least 2 filters and 2 bins, got {n_mels} and {n_bins}")));
    }
    if !(f_min >= 0.0 && f_min < f_max && f_max <= fs_hz as f64 / 2.0) {
        return Err(Error::config(format!("need 0 <= f_min < f_max <= fs/2, got {f_min}, {f_max}, fs={fs_hz}")));
    }
    if n_mels > n_bins {
        return Err(Error::config(format!("{n_mels} filters cannot be spread over {n_bins} bins")));
    }
    let (m_lo, m_hi) = (hz_to_mel(f_min)?, hz_to_mel(f_max)?);
    let edges = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect::<Result<Vec<_>>>()?;
    let n_fft = 2 * (n_bins - 1);
    let bin_hz = fs_hz as f64 / n_fft as f64;

    let mut weights = Array2::<f64>::zeros((n_mels, n_bins));
    for (m, mut row) in weights.rows_mut().into_iter().enumerate() {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
        }
        let peak = row.fold(0.0f64, |a, &b| a.max(b));
        if peak <= 0.0 {
            return Err(Error::config(format!(
                "mel filter {m} ({lo:.2}-{hi:.2} Hz) covers no FFT bin; too many filters for {n_bins} bins"
            )));
        }
        row.mapv_inplace(|w| w / peak);
    }
    Ok(MelFilterBank { weights: weights.mapv(T::lit), center_freqs_hz: edges[1..=n_mels].to_vec() })
}

/// Log mel energies, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram<T> {
    pub values: Array2<T>,
}

impl<T: Scalar> MelSpectrogram<T> {
    /// Plain-text CSV, one frame per row, no header.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{}", v.to_f64_lossy())).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    /// Binary 8-bit PGM (P5). Width is the frame count, height the mel band
    /// count with the lowest band on the bottom row; the value range maps
    /// linearly onto 0..=255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (n_frames, n_mels) = self.values.dim();
        let lo = self.values.fold(f64::INFINITY, |a, v| a.min(v.to_f64_lossy()));
        let hi = self.values.fold(f64::NEG_INFINITY, |a, v| a.max(v.to_f64_lossy()));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut out = format!("P5\n{n_frames} {n_mels}\n255\n").into_bytes();
        for m in (0..n_mels).rev() {
            for f in 0..n_frames {
                let v = (self.values[[f, m]].to_f64_lossy() - lo) / span;
                out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

/// The pooled MFCC vector fed to the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub coeffs: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Orthonormal DCT-II basis, `rows × n`.
pub fn dct_matrix<T: Scalar>(rows: usize, n: usize) -> Array2<T> {
    let nf = n as f64;
    Array2::from_shape_fn((rows, n), |(k, i)| {
        let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        T::lit(s * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * nf)).cos())
    })
}

pub fn dct_ii<T: Scalar>(x: &[T]) -> Vec<T> {
    dct_matrix::<T>(x.len(), x.len()).dot(&Array1::from(x.to_vec())).to_vec()
}

/// Inverse of [`dct_ii`] (the transpose of the orthonormal basis).
pub fn idct_ii<T: Scalar>(c: &[T]) -> Vec<T> {
    dct_matrix::<T>(c.len(), c.len()).t().dot(&Array1::from(c.to_vec())).to_vec()
}

/// Reusable extractor holding the window, FFT plan, filterbank and DCT basis.
#[derive(Debug, Clone)]
pub struct MfccExtractor<T: Scalar> {
    cfg: FeatureConfig,
    spectrum: PowerSpectrum<T>,
    filterbank: MelFilterBank<T>,
    filterbank_t: Array2<T>,
    dct: Array2<T>,
}

impl<T: Scalar> MfccExtractor<T> {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        if cfg.n_coeffs == 0 || cfg.n_coeffs > cfg.n_mels {
            return Err(Error::config(format!("cannot keep {} coefficients of {} mel bands", cfg.n_coeffs, cfg.n_mels)));
        }
        let filterbank = build_mel_filterbank(cfg.n_mels, cfg.n_bins(), cfg.sample_rate_hz, cfg.f_min_hz, cfg.f_max_hz)?;
        Ok(Self {
            cfg,
            spectrum: PowerSpectrum::new(cfg.frame_len),
            filterbank_t: filterbank.weights.t().to_owned(),
            filterbank,
            dct: dct_matrix(cfg.n_coeffs, cfg.n_mels),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterBank<T> {
        &self.filterbank
    }

    fn check_rate(&self, clip: &AudioClip<T>) -> Result<()> {
        if clip.sample_rate_hz != self.cfg.sample_rate_hz {
            return Err(Error::RateMismatch { clip_hz: clip.sample_rate_hz, design_hz: self.cfg.sample_rate_hz });
        }
        Ok(())
    }

    pub fn mel_spectrogram(&self, clip: &AudioClip<T>) -> Result<MelSpectrogram<T>> {
        self.check_rate(clip)?;
        let emphasized = pre_emphasis(clip, T::lit(self.cfg.pre_emphasis));
        let frames = frame_and_window(&emphasized.samples, self.cfg.frame_len, self.cfg.hop)?;
        let power = self.spectrum.compute(&frames)?;
        let floor = T::lit(self.cfg.log_floor);
        let values = power.dot(&self.filterbank_t).mapv(|e| e.max(floor).ln());
        Ok(MelSpectrogram { values })
    }

    pub fn mfcc(&self, clip: &AudioClip<T>) -> Result<FeatureVector<T>> {
        let mel = self.mel_spectrogram(clip)?;
        // (frames × mels) · (mels × coeffs), then pool over frames.
        let cepstra = mel.values.dot(&self.dct.t());
        let pooled = cepstra.mean_axis(Axis(0)).expect("at least one frame");
        Ok(FeatureVector { coeffs: pooled.to_vec() })
    }
}

/// Mel spectrogram with the default configuration.
pub fn mel_spectrogram<T: Scalar>(clip: &AudioClip<T>) -> Result<MelSpectrogram<T>> {
    MfccExtractor::new(FeatureConfig::default())?.mel_spectrogram(clip)
}

/// 52-coefficient MFCC vector with the default configuration.
pub fn mfcc<T: Scalar>(clip: &AudioClip<T>) -> Result<FeatureVector<T>> {
    MfccExtractor::new(FeatureConfig::default())?.mfcc(clip)
}
