//! Categorical cross-entropy.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::labels::ClassLabel;
use crate::num::Scalar;

/// Probabilities are clamped to this before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// `[n, n_classes]` one-hot rows in canonical class order.
pub fn one_hot_targets<T: Scalar>(labels: &[ClassLabel], n_classes: usize) -> Array2<T> {
    let mut t = Array2::zeros((labels.len(), n_classes));
    for (i, l) in labels.iter().enumerate() {
        t[[i, l.index()]] = T::one();
    }
    t
}

fn check(probs: &Array2<impl Scalar>, targets: &Array2<impl Scalar>) -> Result<()> {
    if probs.dim() != targets.dim() {
        return Err(Error::shape(format!("probabilities {:?} vs targets {:?}", probs.dim(), targets.dim())));
    }
    if probs.nrows() == 0 {
        return Err(Error::shape("empty batch"));
    }
    Ok(())
}

/// Batch mean of `−Σ target·ln(max(prob, 1e−12))`.
pub fn cross_entropy<T: Scalar>(probs: &Array2<T>, targets: &Array2<T>) -> Result<T> {
    check(probs, targets)?;
    let floor = T::lit(LOG_FLOOR);
    let mut total = T::zero();
    Zip::from(probs).and(targets).for_each(|&p, &t| {
        if t != T::zero() {
            total -= t * p.max(floor).ln();
        }
    });
    Ok(total / T::lit(probs.nrows() as f64))
}

/// Gradient of [`cross_entropy`] composed with softmax, with respect to the
/// logits: `(probs − targets) / batch`.
pub fn cross_entropy_grad_logits<T: Scalar>(probs: &Array2<T>, targets: &Array2<T>) -> Result<Array2<T>> {
    check(probs, targets)?;
    let b = T::lit(probs.nrows() as f64);
    Ok((probs - targets).mapv(|v| v / b))
}

/// Number of rows whose argmax matches the target's hot index. Ties go to
/// the lowest index.
pub fn count_correct<T: Scalar>(probs: &Array2<T>, labels: &[ClassLabel]) -> usize {
    probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, label)| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best == label.index()
        })
        .count()
}
