//! The record of one training run and its text serialization.
//!
//! The file is TOML key/value settings followed by a `[history]` marker and
//! one CSV row per epoch:
//!
//! ```text
//! seed = 7
//! best_epoch = 12
//! ...
//! [history]
//! epoch,train_loss,train_accuracy,val_loss,val_accuracy,improved
//! 1,2.31,0.12,2.28,0.18,true
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::nn::ModelConfig;

const HISTORY_MARKER: &str = "[history]";
const HISTORY_HEADER: &str = "epoch,train_loss,train_accuracy,val_loss,val_accuracy,improved";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Fraction of training samples classified correctly during the epoch's
    /// updates (train-mode forward passes).
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Validation accuracy beat every earlier epoch.
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub train_samples: usize,
    pub val_samples: usize,
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    #[serde(skip)]
    pub history: Vec<EpochRecord>,
}

impl TrainingRun {
    pub fn to_text(&self) -> Result<String> {
        let mut out = toml::to_string(self).map_err(|e| Error::config(format!("cannot encode training run: {e}")))?;
        out.push('\n');
        out.push_str(HISTORY_MARKER);
        out.push('\n');
        out.push_str(HISTORY_HEADER);
        out.push('\n');
        for r in &self.history {
            writeln!(out, "{},{},{},{},{},{}", r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.improved).unwrap();
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, history) = match text.find(&format!("\n{HISTORY_MARKER}\n")) {
            Some(i) => (&text[..i], &text[i + HISTORY_MARKER.len() + 2..]),
            None => return Err(Error::Parse { line: 0, msg: format!("missing {HISTORY_MARKER} section") }),
        };
        let mut run: TrainingRun = toml::from_str(head).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        let first_line = head.lines().count() + 2;
        let mut lines = history.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HISTORY_HEADER => {}
            _ => return Err(Error::Parse { line: first_line, msg: format!("expected history header {HISTORY_HEADER:?}") }),
        }
        for (i, line) in lines {
            let line_no = first_line + i;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = |m: String| Error::Parse { line: line_no, msg: m };
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            run.history.push(EpochRecord {
                epoch: f[0].trim().parse().map_err(|e| bad(format!("{:?}: {e}", f[0])))?,
                train_loss: num(f[1])?,
                train_accuracy: num(f[2])?,
                val_loss: num(f[3])?,
                val_accuracy: num(f[4])?,
                improved: f[5].trim().parse().map_err(|e| bad(format!("{:?}: {e}", f[5])))?,
            });
        }
        Ok(run)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
