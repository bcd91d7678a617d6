//! Loss, optimizer, data splitting and the training loop.

pub mod adam;
pub mod loss;
pub mod run;
pub mod split;

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{count_correct, cross_entropy, cross_entropy_grad_logits, one_hot_targets, LOG_FLOOR};
pub use run::{EpochRecord, StopReason, TrainingRun};
pub use split::{balance_classes, split_count, split_sizes, stratified_split, MIN_CLASS_SIZE};

use crate::dataset::{Manifest, Split};
use crate::error::{Error, Result};
use crate::nn::{model_forward, update_running_stats, Mode, ModelConfig, ParameterSet};
use crate::num::Scalar;
use crate::pipeline::{predict, FeaturePipeline, FeatureSet};
use crate::store::{save_model, ModelMeta};

/// Random streams derived from the run seed.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_BALANCE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive epochs without a validation-accuracy improvement after
    /// which training stops. Values at or above `max_epochs` never trigger.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Oversample minority classes of the training split with augmentation.
    pub balance: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 8,
            max_epochs: 150,
            early_stop_patience: 300,
            seed: 0,
            val_fraction: 0.175,
            test_fraction: 0.075,
            balance: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.test_fraction > 0.0 && self.val_fraction + self.test_fraction < 1.0) {
            return Err(Error::config("split fractions must be positive with a sum below 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config(format!("batch size must be at least 2 for batch normalization, got {}", self.batch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return Err(Error::config("Adam needs 0 ≤ β1, β2 < 1 and ε > 0"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Called after every epoch with the epoch's record and the current
/// (not necessarily best) parameters.
pub trait TrainObserver<T> {
    fn on_epoch(&mut self, record: &EpochRecord, params: &ParameterSet<T>) -> Control;
}

/// Observer that never interrupts training.
pub struct NoObserver;

impl<T> TrainObserver<T> for NoObserver {
    fn on_epoch(&mut self, _: &EpochRecord, _: &ParameterSet<T>) -> Control {
        Control::Continue
    }
}

impl<T, F: FnMut(&EpochRecord, &ParameterSet<T>) -> Control> TrainObserver<T> for F {
    fn on_epoch(&mut self, record: &EpochRecord, params: &ParameterSet<T>) -> Control {
        self(record, params)
    }
}

pub struct TrainOutcome<T> {
    pub run: TrainingRun,
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ParameterSet<T>,
}

/// Split `0..n` into batches in the given order. A trailing batch of one
/// sample is merged into its predecessor, since batchnorm needs two.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

/// Loss and accuracy of `params` over a feature set in inference mode.
pub fn evaluate_features<T: Scalar>(cfg: &ModelConfig, params: &ParameterSet<T>, set: &FeatureSet<T>) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::shape("cannot evaluate an empty set"));
    }
    let probs = predict(cfg, params, &set.features)?;
    let targets = one_hot_targets(&set.labels, cfg.n_classes);
    let loss = cross_entropy(&probs, &targets)?.to_f64_lossy();
    Ok((loss, count_correct(&probs, &set.labels) as f64 / set.len() as f64))
}

/// Mini-batch training on precomputed features.
///
/// Each epoch visits the training rows in a fresh seeded order, takes one
/// Adam step per batch, folds batch statistics into the batchnorm running
/// averages, then scores the validation set in inference mode. Whenever
/// validation accuracy improves the parameters are kept (and written to
/// `checkpoint` if given). Training ends at `max_epochs`, when patience runs
/// out, or when the observer asks to stop.
pub fn train_on_features<T: Scalar>(
    train: &FeatureSet<T>,
    val: &FeatureSet<T>,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    checkpoint: Option<&Path>,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::config(format!("need at least 2 training samples, got {}", train.len())));
    }
    if val.is_empty() {
        return Err(Error::config("validation set is empty"));
    }
    let expected = model_cfg.input_len * model_cfg.input_channels;
    for (name, set) in [("training", train), ("validation", val)] {
        if set.features.ncols() != expected {
            return Err(Error::shape(format!("{name} features have {} columns, model expects {expected}", set.features.ncols())));
        }
    }

    let adam = cfg.adam();
    let mut params = ParameterSet::<T>::init(model_cfg, cfg.seed);
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_SHUFFLE);
    let targets: Array2<T> = one_hot_targets(&train.labels, model_cfg.n_classes);

    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut wait = 0usize;
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let x = train.features.select(Axis(0), idx);
            let t = targets.select(Axis(0), idx);
            let labels: Vec<_> = idx.iter().map(|&i| train.labels[i]).collect();
            let out = model_forward(model_cfg, &params, &x, Mode::Train)?;
            let loss = cross_entropy(&out.probs, &t)?.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b + 1, loss });
            }
            loss_sum += loss * idx.len() as f64;
            correct += count_correct(&out.probs, &labels);
            let grads = out.backward_logits(model_cfg, &params, &cross_entropy_grad_logits(&out.probs, &t)?)?;
            update_running_stats(&mut params, out.trace.as_ref().expect("train mode keeps a trace"), model_cfg.bn_momentum);
            adam_step(&mut params, &grads, &mut state, &adam)?;
        }
        if !params.is_finite() {
            return Err(Error::Divergence { epoch, batch: 0, loss: f64::NAN });
        }
        let (val_loss, val_accuracy) = evaluate_features(model_cfg, &params, val)?;
        let improved = val_accuracy > best_val;
        if improved {
            best_val = val_accuracy;
            best_epoch = epoch;
            best = params.clone();
            wait = 0;
            if let Some(path) = checkpoint {
                let meta = ModelMeta::with_version(format!("seed{}-epoch{epoch}", cfg.seed));
                save_model(path, &best, model_cfg, &meta)?;
            }
        } else {
            wait += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
            improved,
        };
        tracing::info!(epoch, train_loss = record.train_loss, train_acc = record.train_accuracy, val_loss, val_acc = val_accuracy, "epoch done");
        history.push(record);
        if observer.on_epoch(&record, &params) == Control::Stop {
            stop_reason = StopReason::Observer;
            break;
        }
        if !improved && wait >= cfg.early_stop_patience {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    let run = TrainingRun {
        seed: cfg.seed,
        best_epoch,
        best_val_accuracy: if best_epoch == 0 { 0.0 } else { best_val },
        stop_reason,
        checkpoint: checkpoint.map(Path::to_path_buf),
        train_samples: train.len(),
        val_samples: val.len(),
        train_config: cfg.clone(),
        model_config: model_cfg.clone(),
        history,
    };
    Ok(TrainOutcome { run, params: best })
}

/// Balance (optionally) and featurize the train and validation splits of a
/// manifest that has already been split.
pub fn prepare_features<T: Scalar>(
    manifest: &Manifest,
    cfg: &TrainConfig,
    pipeline: &FeaturePipeline<T>,
) -> Result<(FeatureSet<T>, FeatureSet<T>)> {
    cfg.validate()?;
    for split in [Split::Train, Split::Val] {
        if manifest.split(split).next().is_none() {
            return Err(Error::Split { class: "(all)".into(), msg: format!("manifest has no {split} entries; run the split step first") });
        }
    }
    let manifest = if cfg.balance {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_BALANCE);
        balance_classes(manifest, pipeline.preprocess.target_len_samples, &mut rng)?
    } else {
        manifest.clone()
    };
    let train: Vec<_> = manifest.split(Split::Train).collect();
    let val: Vec<_> = manifest.split(Split::Val).filter(|e| e.augmentation.is_none()).collect();
    Ok((pipeline.manifest_features(&manifest, &train)?, pipeline.manifest_features(&manifest, &val)?))
}

/// Train from a split manifest: read audio, preprocess, balance the training
/// split, extract features once, then run [`train_on_features`].
pub fn train<T: Scalar>(
    manifest: &Manifest,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    checkpoint: Option<&Path>,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainOutcome<T>> {
    let (train_set, val_set) = prepare_features(manifest, cfg, &FeaturePipeline::<T>::default())?;
    train_on_features(&train_set, &val_set, cfg, model_cfg, checkpoint, observer)
}
