//! The Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParameterSet;
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 2e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ParameterSet<T>,
    pub v: ParameterSet<T>,
    /// Number of steps taken.
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParameterSet<T>) -> Self {
        Self { m: params.zeros_shaped(), v: params.zeros_shaped(), t: 0 }
    }
}

/// One bias-corrected Adam update of every trainable tensor:
///
/// ```text
/// m ← β1·m + (1 − β1)·g        m̂ = m / (1 − β1^t)
/// v ← β2·v + (1 − β2)·g²       v̂ = v / (1 − β2^t)
/// θ ← θ − lr·m̂ / (√v̂ + ε)
/// ```
///
/// Batchnorm running statistics are not trainable and are left alone.
pub fn adam_step<T: Scalar>(params: &mut ParameterSet<T>, grads: &ParameterSet<T>, state: &mut AdamState<T>, cfg: &AdamConfig) -> Result<()> {
    let layout = params.layout();
    if grads.layout() != layout || state.m.layout() != layout {
        return Err(Error::shape("parameters, gradients and optimizer state disagree in shape"));
    }
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let bc1 = T::lit(1.0 - cfg.beta1.powi(t));
    let bc2 = T::lit(1.0 - cfg.beta2.powi(t));
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.epsilon);

    let tensors = params.tensors_mut().into_iter().zip(grads.tensors()).zip(state.m.tensors_mut()).zip(state.v.tensors_mut());
    for (((p, g), m), v) in tensors {
        if !p.trainable {
            continue;
        }
        let (mut p, mut m, mut v) = (p.view, m.view, v.view);
        ndarray::Zip::from(&mut p).and(&mut m).and(&mut v).and(&g.view).for_each(|theta, m, v, &g| {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
    Ok(())
}
