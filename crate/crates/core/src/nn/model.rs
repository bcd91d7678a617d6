//! The composed hybrid network: forward pass, reverse pass, running-stat update.

use ndarray::{Array2, Array3, Zip};

use super::config::ModelConfig;
use super::gru::{gru_branch_backward, gru_branch_forward, GruStackCache};
use super::layers::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, conv1d_backward, conv1d_forward, dense_backward, dense_forward,
    leaky_relu, maxpool_backward, maxpool_forward, softmax_rows, BatchNormCache, ConvCache,
};
use super::params::{BatchNormParams, ConvParams, ParameterSet};
use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batchnorm; a trace is recorded for backprop.
    Train,
    /// Running statistics; no trace.
    Inference,
}

struct ConvBlockTrace<T> {
    conv: ConvCache<T>,
    conv_len: usize,
    pool_arg: Vec<u8>,
    bn: BatchNormCache<T>,
    out: Array3<T>,
}

/// Intermediates kept by a train-mode forward pass.
pub struct ForwardTrace<T> {
    block1: ConvBlockTrace<T>,
    block2: ConvBlockTrace<T>,
    gru: Vec<GruStackCache<T>>,
    /// Input to each dense layer, in order.
    dense_in: Vec<Array2<T>>,
    /// Pre-activation of each hidden dense layer.
    dense_pre: Vec<Array2<T>>,
    probs: Array2<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn batch_stats(&self) -> [(&ndarray::Array1<T>, &ndarray::Array1<T>); 2] {
        [(&self.block1.bn.batch_mean, &self.block1.bn.batch_var), (&self.block2.bn.batch_mean, &self.block2.bn.batch_var)]
    }
}

pub struct ForwardOutput<T> {
    /// `[batch, n_classes]`, rows sum to 1.
    pub probs: Array2<T>,
    pub trace: Option<ForwardTrace<T>>,
}

fn conv_block<T: Scalar>(
    x: &Array3<T>,
    conv: &ConvParams<T>,
    bn: &BatchNormParams<T>,
    cfg: &ModelConfig,
    mode: Mode,
) -> Result<(Array3<T>, Option<ConvBlockTrace<T>>)> {
    let eps = T::lit(cfg.bn_epsilon);
    let (c, conv_cache) = conv1d_forward(x, conv)?;
    let conv_len = c.dim().1;
    let (pooled, pool_arg) = maxpool_forward(&c, cfg.pool_size)?;
    drop(c);
    match mode {
        Mode::Train => {
            let (normed, bn_cache) = batchnorm_train(&pooled, bn, eps)?;
            let out = normed.mapv(|v| v.max(T::zero()));
            let trace = ConvBlockTrace { conv: conv_cache, conv_len, pool_arg, bn: bn_cache, out: out.clone() };
            Ok((out, Some(trace)))
        }
        Mode::Inference => {
            let normed = batchnorm_infer(&pooled, bn, eps)?;
            Ok((normed.mapv(|v| v.max(T::zero())), None))
        }
    }
}

fn conv_block_backward<T: Scalar>(
    dout: &Array3<T>,
    tr: &ConvBlockTrace<T>,
    conv: &ConvParams<T>,
    bn: &BatchNormParams<T>,
    cfg: &ModelConfig,
    need_dx: bool,
) -> (ConvParams<T>, BatchNormParams<T>, Option<Array3<T>>) {
    let mut d = dout.clone();
    Zip::from(&mut d).and(&tr.out).for_each(|g, &y| {
        if y <= T::zero() {
            *g = T::zero();
        }
    });
    let (bn_grads, d) = batchnorm_backward(&d, &tr.bn, bn);
    let d = maxpool_backward(&d, &tr.pool_arg, cfg.pool_size, tr.conv_len);
    let (conv_grads, dx) = conv1d_backward(&d, &tr.conv, conv, need_dx);
    (conv_grads, bn_grads, dx)
}

/// Classify a batch of feature vectors, `features` being `[batch, input_len]`.
pub fn model_forward<T: Scalar>(
    cfg: &ModelConfig,
    params: &ParameterSet<T>,
    features: &Array2<T>,
    mode: Mode,
) -> Result<ForwardOutput<T>> {
    let (b, n) = features.dim();
    let expected = cfg.input_len * cfg.input_channels;
    if n != expected {
        return Err(Error::shape(format!("expected {expected} features per sample, got {n}")));
    }
    if b == 0 {
        return Err(Error::shape("empty batch"));
    }
    let x = features
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b, cfg.input_len, cfg.input_channels))
        .expect("contiguous");
    let (h1, block1) = conv_block(&x, &params.conv1, &params.bn1, cfg, mode)?;
    let (seq, block2) = conv_block(&h1, &params.conv2, &params.bn2, cfg, mode)?;
    drop(h1);

    let keep = mode == Mode::Train;
    let mut summed: Option<Array2<T>> = None;
    let mut gru_caches = Vec::new();
    for stack in &params.gru {
        let (out, cache) = gru_branch_forward(&seq, stack, keep)?;
        gru_caches.extend(cache);
        summed = Some(match summed {
            Some(acc) => acc + &out,
            None => out,
        });
    }
    let mut h = summed.ok_or_else(|| Error::shape("no GRU sets"))?;

    let slope = T::lit(cfg.leaky_slope);
    let last = params.dense.len() - 1;
    let mut dense_in = Vec::new();
    let mut dense_pre = Vec::new();
    for (i, layer) in params.dense.iter().enumerate() {
        let pre = dense_forward(&h, layer)?;
        if keep {
            dense_in.push(h);
        }
        if i == last {
            h = pre;
        } else {
            h = pre.mapv(|v| leaky_relu(v, slope));
            if keep {
                dense_pre.push(pre);
            }
        }
    }
    let probs = softmax_rows(&h);

    let trace = match (block1, block2) {
        (Some(block1), Some(block2)) => {
            Some(ForwardTrace { block1, block2, gru: gru_caches, dense_in, dense_pre, probs: probs.clone() })
        }
        _ => None,
    };
    Ok(ForwardOutput { probs, trace })
}

impl<T: Scalar> ForwardOutput<T> {
    /// Gradients of every parameter given the loss gradient with respect to
    /// the pre-softmax logits.
    pub fn backward_logits(&self, cfg: &ModelConfig, params: &ParameterSet<T>, dlogits: &Array2<T>) -> Result<ParameterSet<T>> {
        let trace = self.trace.as_ref().ok_or_else(|| Error::State("backward needs a train-mode forward trace".into()))?;
        model_backward_logits(cfg, params, trace, dlogits)
    }

    /// Gradients given the loss gradient with respect to the probabilities.
    pub fn backward(&self, cfg: &ModelConfig, params: &ParameterSet<T>, dprobs: &Array2<T>) -> Result<ParameterSet<T>> {
        let trace = self.trace.as_ref().ok_or_else(|| Error::State("backward needs a train-mode forward trace".into()))?;
        model_backward(cfg, params, trace, dprobs)
    }
}

/// Chain `dprobs` through the softmax Jacobian:
/// `dlogit_i = p_i · (dp_i − Σ_j p_j dp_j)`.
pub fn model_backward<T: Scalar>(
    cfg: &ModelConfig,
    params: &ParameterSet<T>,
    trace: &ForwardTrace<T>,
    dprobs: &Array2<T>,
) -> Result<ParameterSet<T>> {
    if dprobs.dim() != trace.probs.dim() {
        return Err(Error::shape(format!("gradient {:?} does not match output {:?}", dprobs.dim(), trace.probs.dim())));
    }
    let mut dlogits = dprobs.clone();
    for (mut g, p) in dlogits.rows_mut().into_iter().zip(trace.probs.rows()) {
        let dot: T = g.iter().zip(p.iter()).map(|(&a, &b)| a * b).sum();
        Zip::from(&mut g).and(&p).for_each(|gi, &pi| *gi = pi * (*gi - dot));
    }
    model_backward_logits(cfg, params, trace, &dlogits)
}

pub fn model_backward_logits<T: Scalar>(
    cfg: &ModelConfig,
    params: &ParameterSet<T>,
    trace: &ForwardTrace<T>,
    dlogits: &Array2<T>,
) -> Result<ParameterSet<T>> {
    if dlogits.dim() != trace.probs.dim() {
        return Err(Error::shape(format!("gradient {:?} does not match output {:?}", dlogits.dim(), trace.probs.dim())));
    }
    let mut grads = params.zeros_shaped();
    let slope = T::lit(cfg.leaky_slope);

    let mut dh = dlogits.clone();
    for i in (0..params.dense.len()).rev() {
        if i < trace.dense_pre.len() {
            Zip::from(&mut dh).and(&trace.dense_pre[i]).for_each(|g, &pre| {
                if pre <= T::zero() {
                    *g *= slope;
                }
            });
        }
        let (g, dx) = dense_backward(&dh, &trace.dense_in[i], &params.dense[i]);
        grads.dense[i] = g;
        dh = dx;
    }

    let mut dseq: Option<Array3<T>> = None;
    for (s, (stack, cache)) in params.gru.iter().zip(&trace.gru).enumerate() {
        let (g, dx) = gru_branch_backward(&dh, cache, stack);
        grads.gru[s] = g;
        dseq = Some(match dseq {
            Some(acc) => acc + &dx,
            None => dx,
        });
    }
    let dseq = dseq.ok_or_else(|| Error::shape("no GRU sets"))?;

    let (c2, b2, dh1) = conv_block_backward(&dseq, &trace.block2, &params.conv2, &params.bn2, cfg, true);
    grads.conv2 = c2;
    grads.bn2 = b2;
    let dh1 = dh1.expect("requested");
    let (c1, b1, _) = conv_block_backward(&dh1, &trace.block1, &params.conv1, &params.bn1, cfg, false);
    grads.conv1 = c1;
    grads.bn1 = b1;
    Ok(grads)
}

/// Fold the batch statistics of a train-mode pass into the running averages:
/// `running ← momentum·running + (1 − momentum)·batch`.
pub fn update_running_stats<T: Scalar>(params: &mut ParameterSet<T>, trace: &ForwardTrace<T>, momentum: f64) {
    let m = T::lit(momentum);
    let keep = T::one() - m;
    for (bn, (mean, var)) in [&mut params.bn1, &mut params.bn2].into_iter().zip(trace.batch_stats()) {
        Zip::from(&mut bn.running_mean).and(mean).for_each(|r, &b| *r = m * *r + keep * b);
        Zip::from(&mut bn.running_var).and(var).for_each(|r, &b| *r = m * *r + keep * b);
    }
}
