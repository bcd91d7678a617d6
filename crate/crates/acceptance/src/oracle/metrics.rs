//! Exact per-class metrics by recounting individual samples.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Signed, Zero};

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMetrics {
    pub precision: Ratio<u64>,
    pub recall: Ratio<u64>,
    pub f1: Ratio<u64>,
    pub accuracy: Ratio<u64>,
}

fn frac(num: u64, den: u64) -> Ratio<u64> {
    if den == 0 {
        Ratio::zero()
    } else {
        Ratio::new(num, den)
    }
}

/// Expand the matrix into `(truth, predicted)` samples and count TP/FP/FN/TN
/// for each class by direct comparison.
pub fn brute_force(counts: &[Vec<u64>]) -> Vec<ExactMetrics> {
    let n = counts.len();
    let mut samples = Vec::new();
    for (t, row) in counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            samples.extend(std::iter::repeat_n((t, p), c as usize));
        }
    }
    (0..n)
        .map(|c| {
            let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
            for &(t, p) in &samples {
                match (t == c, p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            // F1 as the harmonic mean of the exact precision and recall.
            let (p, r) = (frac(tp, tp + fp), frac(tp, tp + fn_));
            let f1 = if (p + r).is_zero() { Ratio::zero() } else { Ratio::from(2) * p * r / (p + r) };
            ExactMetrics { precision: p, recall: r, f1, accuracy: frac(tp + tn, tp + fp + fn_ + tn) }
        })
        .collect()
}

/// Whether `v` is the double nearest to `exact` (ties either way).
pub fn is_nearest_double(v: f64, exact: Ratio<u64>) -> bool {
    let Some(vr) = BigRational::from_float(v) else { return false };
    let er = BigRational::new(BigInt::from(*exact.numer()), BigInt::from(*exact.denom()));
    let err = (vr - &er).abs();
    let half_gap = |other: f64| {
        let o = BigRational::from_float(other).expect("finite");
        (o - BigRational::from_float(v).expect("finite")).abs() / BigInt::from(2)
    };
    err <= half_gap(next_up(v)) && err <= half_gap(next_down(v))
}

fn next_up(v: f64) -> f64 {
    if v == 0.0 {
        f64::from_bits(1)
    } else if v > 0.0 {
        f64::from_bits(v.to_bits() + 1)
    } else {
        f64::from_bits(v.to_bits() - 1)
    }
}

fn next_down(v: f64) -> f64 {
    -next_up(-v)
}
