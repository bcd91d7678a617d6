//! Heart and lung sound classification.
//!
//! The pipeline runs a recording through a band-pass filter, resamples it to
//! 1 kHz, keeps 2.5 s, and peak-normalizes it. It then summarizes the clip as
//! 52 mean MFCCs and scores the vector with a CNN+GRU network over eleven
//! diagnostic classes: five heart and six lung.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). Training and
//! inference use `f32`. Gradient checks use `f64`. The aliases below name the
//! concrete types.
//!
//! ```no_run
//! use ausc_core::{Classifier32, Organ};
//!
//! let model = Classifier32::load("model.ausc")?;
//! let bytes = std::fs::read("recording.wav").unwrap();
//! let result = model.classify_wav_bytes(&bytes, Some(Organ::Heart))?;
//! println!("{} ({:?})", result.label, result.probabilities);
//! # Ok::<(), ausc_core::Error>(())
//! ```

pub mod dataset;
pub mod error;
pub mod features;
pub mod labels;
pub mod metrics;
pub mod nn;
pub mod num;
pub mod pipeline;
pub mod signal;
pub mod store;
pub mod train;

pub use dataset::{load_manifest, read_wav, save_manifest, scan_dataset, Layout, Manifest, ManifestEntry, Split};
pub use error::{Error, ErrorKind, Result};
pub use features::{mfcc, FeatureConfig, FeatureVector, MfccExtractor};
pub use labels::{argmax_label, ClassLabel, Organ, N_CLASSES};
pub use metrics::{confusion, metrics_from_confusion, render_table, ConfusionMatrix, MetricsReport, TableStyle};
pub use nn::{model_forward, Mode, ModelConfig, ParameterSet};
pub use num::Scalar;
pub use pipeline::{Classification, Classifier, FeaturePipeline, FeatureSet, MIN_DURATION_SECS};
pub use signal::{augment, design_bandpass, preprocess, AudioClip, AugmentSpec, BiquadCascade, PreprocessConfig};
pub use store::{load_model, save_model, ModelArtifact, ModelMeta};
pub use train::{train, train_on_features, TrainConfig, TrainingRun};

pub type AudioClip32 = AudioClip<f32>;
pub type AudioClip64 = AudioClip<f64>;
pub type ParameterSet32 = ParameterSet<f32>;
pub type ParameterSet64 = ParameterSet<f64>;
pub type FeatureSet32 = FeatureSet<f32>;
pub type Classifier32 = Classifier<f32>;
pub type Classifier64 = Classifier<f64>;
