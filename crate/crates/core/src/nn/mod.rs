//! The hybrid CNN+GRU classifier, written directly against `ndarray`.

pub mod config;
pub mod gru;
pub mod layers;
pub mod model;
pub mod params;

pub use config::{ConvSpec, ModelConfig};
pub use gru::gru_cell;
pub use model::{model_backward, model_backward_logits, model_forward, update_running_stats, ForwardOutput, ForwardTrace, Mode};
pub use params::{BatchNormParams, ConvParams, DenseParams, GruLayerParams, ParameterSet};
