use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::N_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub filters: usize,
}

/// Architecture hyperparameters of the hybrid network.
///
/// The input is a length-`input_len` sequence with `input_channels`
/// channels. Two conv blocks (conv → max-pool → batchnorm → ReLU) feed
/// `gru_sets` parallel GRU stacks whose final states are summed, followed by
/// the Leaky-ReLU dense head and an `n_classes`-way softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_len: usize,
    pub input_channels: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub pool_size: usize,
    pub gru_sets: usize,
    /// Layer widths within one stack, bottom to top.
    pub gru_units: Vec<usize>,
    pub dense_units: Vec<usize>,
    pub leaky_slope: f64,
    pub n_classes: usize,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_len: 52,
            input_channels: 1,
            conv1: ConvSpec { kernel: 11, filters: 256 },
            conv2: ConvSpec { kernel: 11, filters: 512 },
            pool_size: 2,
            gru_sets: 5,
            gru_units: vec![32, 64, 128],
            dense_units: vec![64, 32],
            leaky_slope: 0.01,
            n_classes: N_CLASSES,
            bn_epsilon: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

impl ModelConfig {
    /// The small topology used by the gradient suites: 8 filters, one GRU
    /// stack of 4→8→8 units over a 4-step sequence.
    pub fn reduced() -> Self {
        Self {
            input_len: 16,
            conv1: ConvSpec { kernel: 11, filters: 8 },
            conv2: ConvSpec { kernel: 11, filters: 8 },
            gru_sets: 1,
            gru_units: vec![4, 8, 8],
            dense_units: vec![6, 5],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_classes != N_CLASSES {
            return bad(format!("n_classes must be {N_CLASSES}, got {}", self.n_classes));
        }
        for (name, c) in [("conv1", self.conv1), ("conv2", self.conv2)] {
            if c.kernel % 2 == 0 || c.filters == 0 {
                return bad(format!("{name} needs an odd kernel and at least one filter, got {c:?}"));
            }
        }
        if self.input_channels == 0 || self.pool_size < 2 {
            return bad("input channels must be positive and pool size at least 2".into());
        }
        if self.seq_len() == 0 {
            return bad(format!("input length {} vanishes after two pooling stages", self.input_len));
        }
        if self.gru_sets == 0 || self.gru_units.is_empty() || self.gru_units.contains(&0) {
            return bad("need at least one GRU set with non-zero layer widths".into());
        }
        if self.dense_units.contains(&0) {
            return bad("dense widths must be positive".into());
        }
        if !(self.leaky_slope.is_finite() && self.bn_epsilon > 0.0 && (0.0..1.0).contains(&self.bn_momentum)) {
            return bad("leaky slope, batchnorm epsilon or momentum out of range".into());
        }
        Ok(())
    }

    /// Sequence length entering the GRU stacks.
    pub fn seq_len(&self) -> usize {
        self.input_len / self.pool_size / self.pool_size
    }

    pub fn gru_output(&self) -> usize {
        *self.gru_units.last().unwrap_or(&0)
    }
}
