//! Waveform → feature vector, and the end-to-end classifier built on it.

use std::path::Path;

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{decode_wav, read_wav, Manifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVector, MelSpectrogram, MfccExtractor};
use crate::metrics::{confusion, ConfusionMatrix};
use crate::labels::{argmax_label, ClassLabel, Organ};
use crate::nn::{model_forward, Mode, ModelConfig, ParameterSet};
use crate::num::Scalar;
use crate::signal::{augment, normalize_peak, preprocess, resample, standardize_length, AudioClip, AugmentSpec, PreprocessConfig};
use crate::store::{load_model, ModelArtifact, ModelMeta};

/// Shortest recording accepted for classification.
pub const MIN_DURATION_SECS: f64 = 0.5;

/// Batch size used for inference over many feature rows.
const INFERENCE_CHUNK: usize = 64;

/// Preprocessing followed by MFCC extraction, with an optional augmentation
/// applied to the preprocessed waveform.
#[derive(Debug, Clone)]
pub struct FeaturePipeline<T: Scalar> {
    pub preprocess: PreprocessConfig,
    extractor: MfccExtractor<T>,
}

/// Feature rows with their labels, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    /// `[n, n_coeffs]`
    pub features: Array2<T>,
    pub labels: Vec<ClassLabel>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn from_vectors(rows: Vec<FeatureVector<T>>, labels: Vec<ClassLabel>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::shape(format!("{} feature rows but {} labels", rows.len(), labels.len())));
        }
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::shape("feature rows differ in length"));
        }
        let flat: Vec<T> = rows.into_iter().flat_map(|r| r.coeffs).collect();
        let features = Array2::from_shape_vec((labels.len(), width), flat).expect("checked lengths");
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> FeatureSet<U> {
        FeatureSet { features: self.features.mapv(|v| U::lit(v.to_f64_lossy())), labels: self.labels.clone() }
    }
}

impl<T: Scalar> FeaturePipeline<T> {
    pub fn new(preprocess: PreprocessConfig, features: FeatureConfig) -> Result<Self> {
        preprocess.validate()?;
        if features.sample_rate_hz != preprocess.target_fs_hz {
            return Err(Error::config(format!(
                "features expect {} Hz but preprocessing produces {} Hz",
                features.sample_rate_hz, preprocess.target_fs_hz
            )));
        }
        Ok(Self { preprocess, extractor: MfccExtractor::new(features)? })
    }

    pub fn extractor(&self) -> &MfccExtractor<T> {
        &self.extractor
    }

    pub fn features(&self, raw: &AudioClip<T>, augmentation: Option<&AugmentSpec>) -> Result<FeatureVector<T>> {
        let mut clip = preprocess(raw, &self.preprocess)?;
        if let Some(spec) = augmentation {
            clip = normalize_peak(&augment(&clip, spec)?);
        }
        self.extractor.mfcc(&clip)
    }

    pub fn entry_features(&self, manifest: &Manifest, entry: &ManifestEntry) -> Result<FeatureVector<T>> {
        let raw = read_wav::<T>(manifest.resolve(entry))?;
        self.features(&raw, entry.augmentation.as_ref())
    }

    /// Log-mel spectrograms of a recording before and after band-pass
    /// filtering. "Before" is the raw waveform brought to the feature rate and
    /// length with no filtering; "after" is the full preprocessing output.
    pub fn spectrograms(&self, raw: &AudioClip<T>) -> Result<(MelSpectrogram<T>, MelSpectrogram<T>)> {
        let after = preprocess(raw, &self.preprocess)?;
        let unfiltered = resample(raw, self.preprocess.target_fs_hz)?;
        let before = normalize_peak(&standardize_length(&unfiltered, self.preprocess.target_len_samples));
        Ok((self.extractor.mel_spectrogram(&before)?, self.extractor.mel_spectrogram(&after)?))
    }

    /// Features for the given entries, computed in parallel; row order
    /// follows `entries`.
    pub fn manifest_features(&self, manifest: &Manifest, entries: &[&ManifestEntry]) -> Result<FeatureSet<T>> {
        let rows = entries.par_iter().map(|e| self.entry_features(manifest, e)).collect::<Result<Vec<_>>>()?;
        FeatureSet::from_vectors(rows, entries.iter().map(|e| e.label).collect())
    }
}

impl<T: Scalar> Default for FeaturePipeline<T> {
    fn default() -> Self {
        Self::new(PreprocessConfig::default(), FeatureConfig::default()).expect("default configuration is valid")
    }
}

/// Class probabilities for every row of `features`, in inference mode.
pub fn predict<T: Scalar>(cfg: &ModelConfig, params: &ParameterSet<T>, features: &Array2<T>) -> Result<Array2<T>> {
    let n = features.nrows();
    let mut probs = Array2::zeros((n, cfg.n_classes));
    for start in (0..n).step_by(INFERENCE_CHUNK) {
        let end = (start + INFERENCE_CHUNK).min(n);
        let out = model_forward(cfg, params, &features.slice(s![start..end, ..]).to_owned(), Mode::Inference)?;
        probs.slice_mut(s![start..end, ..]).assign(&out.probs);
    }
    Ok(probs)
}

/// Result of classifying one recording. Probabilities are in canonical class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ClassLabel,
    pub probabilities: Vec<f64>,
    pub model_version: String,
}

/// A loaded model plus the feature pipeline it was trained with.
#[derive(Debug, Clone)]
pub struct Classifier<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParameterSet<T>,
    pub meta: ModelMeta,
    pipeline: FeaturePipeline<T>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(config: ModelConfig, params: ParameterSet<T>, meta: ModelMeta) -> Result<Self> {
        config.validate()?;
        params.check_against(&config)?;
        Ok(Self { config, params, meta, pipeline: FeaturePipeline::default() })
    }

    pub fn from_artifact(a: ModelArtifact) -> Result<Self> {
        Self::new(a.config, a.params.cast(), a.meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_artifact(load_model(path)?)
    }

    pub fn model_version(&self) -> &str {
        &self.meta.model_version
    }

    pub fn pipeline(&self) -> &FeaturePipeline<T> {
        &self.pipeline
    }

    pub fn predict(&self, features: &Array2<T>) -> Result<Array2<T>> {
        predict(&self.config, &self.params, features)
    }

    /// Classify a raw recording. With `organ` set, the label is the most
    /// probable class of that organ; probabilities always cover all classes.
    pub fn classify_clip(&self, raw: &AudioClip<T>, organ: Option<Organ>) -> Result<Classification> {
        let min = (MIN_DURATION_SECS * raw.sample_rate_hz as f64).ceil() as usize;
        if raw.len() < min {
            return Err(Error::TooShort { len: raw.len(), min });
        }
        let fv = self.pipeline.features(raw, None)?;
        let row = Array2::from_shape_vec((1, fv.len()), fv.coeffs).expect("one row");
        let probs = self.predict(&row)?;
        let probabilities: Vec<f64> = probs.row(0).iter().map(|v| v.to_f64_lossy()).collect();
        Ok(Classification { label: argmax_label(&probabilities, organ), probabilities, model_version: self.meta.model_version.clone() })
    }

    /// Confusion matrix (11×11, canonical order) over one manifest split.
    /// Each recording's prediction is restricted to its own organ's classes,
    /// as when a user picks heart or lung before recording.
    pub fn evaluate(&self, manifest: &Manifest, split: Split) -> Result<ConfusionMatrix> {
        let entries: Vec<&ManifestEntry> = manifest.split(split).collect();
        if entries.is_empty() {
            return Err(Error::Domain(format!("manifest has no {split} entries")));
        }
        let set = self.pipeline.manifest_features(manifest, &entries)?;
        let probs = self.predict(&set.features)?;
        let pred: Vec<ClassLabel> = probs
            .rows()
            .into_iter()
            .zip(&entries)
            .map(|(row, e)| argmax_label(&row.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(), Some(e.organ)))
            .collect();
        confusion(&set.labels, &pred)
    }

    pub fn classify_wav_bytes(&self, bytes: &[u8], organ: Option<Organ>) -> Result<Classification> {
        let (_, clip) = decode_wav::<T>(bytes)?;
        self.classify_clip(&clip, organ)
    }
}
