//! Batched layer kernels with their reverse-mode counterparts.
//!
//! Sequence activations are `[batch, time, channels]`, flat activations
//! `[batch, features]`. Every backward function takes what its forward
//! returned and produces parameter gradients in the parameter's own shape.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Zip};

use super::params::{BatchNormParams, ConvParams, DenseParams};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Unfold `x` into `[batch·len, kernel·cin]` rows for a same-padded
/// convolution. Column `k·cin + c` holds `x[t + k − pad, c]` (zero outside).
fn im2col<T: Scalar>(x: &Array3<T>, kernel: usize) -> Array2<T> {
    let (b, l, cin) = x.dim();
    let pad = kernel / 2;
    let mut cols = Array2::zeros((b * l, kernel * cin));
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("fresh array");
    let row_len = kernel * cin;
    for bi in 0..b {
        for t in 0..l {
            let row = &mut cs[(bi * l + t) * row_len..][..row_len];
            for k in 0..kernel {
                let src = t as isize + k as isize - pad as isize;
                if src < 0 || src >= l as isize {
                    continue;
                }
                let from = (bi * l + src as usize) * cin;
                row[k * cin..(k + 1) * cin].copy_from_slice(&xs[from..from + cin]);
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(dcols: &Array2<T>, b: usize, l: usize, cin: usize, kernel: usize) -> Array3<T> {
    let pad = kernel / 2;
    let mut dx = Array3::<T>::zeros((b, l, cin));
    let dcols = dcols.as_standard_layout();
    let cs = dcols.as_slice().expect("standard layout");
    let xs = dx.as_slice_mut().expect("fresh array");
    let row_len = kernel * cin;
    for bi in 0..b {
        for t in 0..l {
            let row = &cs[(bi * l + t) * row_len..][..row_len];
            for k in 0..kernel {
                let dst = t as isize + k as isize - pad as isize;
                if dst < 0 || dst >= l as isize {
                    continue;
                }
                let to = (bi * l + dst as usize) * cin;
                for (d, &g) in xs[to..to + cin].iter_mut().zip(&row[k * cin..(k + 1) * cin]) {
                    *d += g;
                }
            }
        }
    }
    dx
}

/// `[out, in, k]` kernel as a `[k·in, out]` matrix matching [`im2col`] columns.
fn kernel_matrix<T: Scalar>(kernel: &Array3<T>) -> Array2<T> {
    let (cout, cin, k) = kernel.dim();
    kernel
        .view()
        .permuted_axes([2, 1, 0])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((k * cin, cout))
        .expect("contiguous")
}

pub struct ConvCache<T> {
    cols: Array2<T>,
    in_dim: (usize, usize, usize),
}

/// Same-padded 1-D convolution:
/// `out[t, o] = bias[o] + Σ_{k,c} kernel[o, c, k] · x[t + k − pad, c]`.
pub fn conv1d_forward<T: Scalar>(x: &Array3<T>, p: &ConvParams<T>) -> Result<(Array3<T>, ConvCache<T>)> {
    let (b, l, cin) = x.dim();
    let (cout, kcin, k) = p.kernel.dim();
    if kcin != cin || p.bias.len() != cout {
        return Err(Error::shape(format!("conv kernel {:?} / bias {} incompatible with input channels {cin}", p.kernel.dim(), p.bias.len())));
    }
    if k % 2 == 0 {
        return Err(Error::shape(format!("conv kernel length must be odd, got {k}")));
    }
    let cols = im2col(x, k);
    let mut y = cols.dot(&kernel_matrix(&p.kernel));
    y += &p.bias;
    let y = y.into_shape_with_order((b, l, cout)).expect("contiguous");
    Ok((y, ConvCache { cols, in_dim: (b, l, cin) }))
}

/// Returns parameter gradients and, when requested, the input gradient.
pub fn conv1d_backward<T: Scalar>(
    dy: &Array3<T>,
    cache: &ConvCache<T>,
    p: &ConvParams<T>,
    need_dx: bool,
) -> (ConvParams<T>, Option<Array3<T>>) {
    let (b, l, cin) = cache.in_dim;
    let (cout, _, k) = p.kernel.dim();
    let dy2 = dy.view().into_shape_with_order((b * l, cout)).expect("contiguous");
    let dw = cache.cols.t().dot(&dy2);
    let kernel = dw
        .into_shape_with_order((k, cin, cout))
        .expect("contiguous")
        .permuted_axes([2, 1, 0])
        .as_standard_layout()
        .into_owned();
    let bias = dy2.sum_axis(Axis(0));
    let dx = need_dx.then(|| {
        let dcols = dy2.dot(&kernel_matrix(&p.kernel).t());
        col2im(&dcols, b, l, cin, k)
    });
    (ConvParams { kernel, bias }, dx)
}

/// Non-overlapping max over `size` steps; a trailing partial window is
/// dropped. Returns the winning offset of each output (first on ties).
pub fn maxpool_forward<T: Scalar>(x: &Array3<T>, size: usize) -> Result<(Array3<T>, Vec<u8>)> {
    let (b, l, c) = x.dim();
    if l < size || size == 0 {
        return Err(Error::shape(format!("cannot pool length {l} with window {size}")));
    }
    let lo = l / size;
    let mut y = Array3::zeros((b, lo, c));
    let mut arg = vec![0u8; b * lo * c];
    let mut i = 0;
    for bi in 0..b {
        for t in 0..lo {
            for ch in 0..c {
                let mut best = x[[bi, t * size, ch]];
                let mut at = 0u8;
                for o in 1..size {
                    let v = x[[bi, t * size + o, ch]];
                    if v > best {
                        best = v;
                        at = o as u8;
                    }
                }
                y[[bi, t, ch]] = best;
                arg[i] = at;
                i += 1;
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool_backward<T: Scalar>(dy: &Array3<T>, arg: &[u8], size: usize, in_len: usize) -> Array3<T> {
    let (b, lo, c) = dy.dim();
    let mut dx = Array3::zeros((b, in_len, c));
    let mut i = 0;
    for bi in 0..b {
        for t in 0..lo {
            for ch in 0..c {
                dx[[bi, t * size + arg[i] as usize, ch]] = dy[[bi, t, ch]];
                i += 1;
            }
        }
    }
    dx
}

pub struct BatchNormCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
    pub batch_mean: Array1<T>,
    pub batch_var: Array1<T>,
}

fn as_rows<T: Scalar>(x: &Array3<T>) -> ArrayView2<'_, T> {
    let (b, l, c) = x.dim();
    x.view().into_shape_with_order((b * l, c)).expect("contiguous")
}

/// Normalize per channel over (batch, time) with the batch's own
/// (biased) statistics.
pub fn batchnorm_train<T: Scalar>(x: &Array3<T>, p: &BatchNormParams<T>, eps: T) -> Result<(Array3<T>, BatchNormCache<T>)> {
    let (b, l, c) = x.dim();
    if b < 2 {
        return Err(Error::config(format!("batchnorm in train mode needs a batch of at least 2, got {b}")));
    }
    if p.gamma.len() != c {
        return Err(Error::shape(format!("batchnorm has {} channels, input has {c}", p.gamma.len())));
    }
    let rows = as_rows(x);
    let n = T::lit((b * l) as f64);
    let mean = rows.sum_axis(Axis(0)) / n;
    let centered = &rows - &mean;
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
    let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
    let xhat = centered * &inv_std;
    let y = &xhat * &p.gamma + &p.beta;
    let y = y.into_shape_with_order((b, l, c)).expect("contiguous");
    Ok((y, BatchNormCache { xhat, inv_std, batch_mean: mean, batch_var: var }))
}

pub fn batchnorm_infer<T: Scalar>(x: &Array3<T>, p: &BatchNormParams<T>, eps: T) -> Result<Array3<T>> {
    let c = x.dim().2;
    if p.gamma.len() != c {
        return Err(Error::shape(format!("batchnorm has {} channels, input has {c}", p.gamma.len())));
    }
    let scale = Zip::from(&p.gamma).and(&p.running_var).map_collect(|&g, &v| g / (v + eps).sqrt());
    let shift = Zip::from(&p.beta).and(&p.running_mean).and(&scale).map_collect(|&b, &m, &s| b - m * s);
    Ok(x * &scale + &shift)
}

/// Gradients for gamma and beta (running statistics get zero) and the input.
pub fn batchnorm_backward<T: Scalar>(dy: &Array3<T>, cache: &BatchNormCache<T>, p: &BatchNormParams<T>) -> (BatchNormParams<T>, Array3<T>) {
    let (b, l, c) = dy.dim();
    let dy = as_rows(dy);
    let n = T::lit((b * l) as f64);
    let dgamma = (&dy * &cache.xhat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let dxhat = &dy * &p.gamma;
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
    let mut dx = dxhat * n - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat;
    dx *= &(&cache.inv_std / n);
    let grads = BatchNormParams { gamma: dgamma, beta: dbeta, running_mean: Array1::zeros(c), running_var: Array1::zeros(c) };
    (grads, dx.into_shape_with_order((b, l, c)).expect("contiguous"))
}

pub fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

pub fn leaky_relu<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        slope * x
    }
}

pub fn tanh_act<T: Scalar>(x: T) -> T {
    x.tanh()
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let a = Array2::from_shape_vec((1, logits.len()), logits.to_vec()).expect("row");
    softmax_rows(&a).into_raw_vec_and_offset().0
}

pub fn dense_forward<T: Scalar>(x: &Array2<T>, p: &DenseParams<T>) -> Result<Array2<T>> {
    if x.ncols() != p.weight.nrows() {
        return Err(Error::shape(format!("dense layer expects {} inputs, got {}", p.weight.nrows(), x.ncols())));
    }
    Ok(x.dot(&p.weight) + &p.bias)
}

pub fn dense_backward<T: Scalar>(dy: &Array2<T>, x: &Array2<T>, p: &DenseParams<T>) -> (DenseParams<T>, Array2<T>) {
    let grads = DenseParams { weight: x.t().dot(dy), bias: dy.sum_axis(Axis(0)) };
    (grads, dy.dot(&p.weight.t()))
}

/// Time-axis view helper used by the GRU stacks.
pub(crate) fn step<T: Scalar>(x: &Array3<T>, t: usize) -> ArrayView2<'_, T> {
    x.slice(s![.., t, ..])
}
