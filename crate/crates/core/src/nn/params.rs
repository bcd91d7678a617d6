//! Learnable tensors of the network, plus batchnorm running statistics.

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayViewD, ArrayViewMutD, Dimension, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    /// `[out_channels, in_channels, kernel]`
    pub kernel: Array3<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

/// One GRU layer. Input weights are `[in, units]`, recurrent weights `[units, units]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams<T> {
    pub w_z: Array2<T>,
    pub w_r: Array2<T>,
    pub w_h: Array2<T>,
    pub u_z: Array2<T>,
    pub u_r: Array2<T>,
    pub u_h: Array2<T>,
    pub b_z: Array1<T>,
    pub b_r: Array1<T>,
    pub b_h: Array1<T>,
}

impl<T: Scalar> GruLayerParams<T> {
    pub fn zeros(input: usize, units: usize) -> Self {
        let w = || Array2::zeros((input, units));
        let u = || Array2::zeros((units, units));
        let b = || Array1::zeros(units);
        Self { w_z: w(), w_r: w(), w_h: w(), u_z: u(), u_r: u(), u_h: u(), b_z: b(), b_r: b(), b_h: b() }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn units(&self) -> usize {
        self.w_z.ncols()
    }
}

/// Fully connected layer, `y = x·weight + bias` with `weight` as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    pub conv1: ConvParams<T>,
    pub bn1: BatchNormParams<T>,
    pub conv2: ConvParams<T>,
    pub bn2: BatchNormParams<T>,
    /// One stack of layers per parallel set.
    pub gru: Vec<Vec<GruLayerParams<T>>>,
    /// Hidden dense layers followed by the output layer.
    pub dense: Vec<DenseParams<T>>,
}

/// A named view into one tensor of a [`ParameterSet`].
pub struct TensorRef<'a, T> {
    pub name: String,
    pub trainable: bool,
    pub view: ArrayViewD<'a, T>,
}

pub struct TensorMut<'a, T> {
    pub name: String,
    pub trainable: bool,
    pub view: ArrayViewMutD<'a, T>,
}

fn glorot<T: Scalar, D: Dimension>(rng: &mut ChaCha8Rng, shape: D, fan_in: usize, fan_out: usize) -> ndarray::Array<T, D> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    ndarray::Array::from_shape_simple_fn(shape, || T::lit(rng.random_range(-limit..=limit)))
}

impl<T: Scalar> ParameterSet<T> {
    /// Zero-valued set with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self::build(cfg, &mut |shape, _, _| ArrayD::zeros(shape))
    }

    /// Glorot-uniform weights, zero biases, unit batchnorm scale and running
    /// statistics (0, 1). Values are drawn in `f64` so a seed yields the same
    /// parameters, up to rounding, at every precision.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(cfg, &mut |shape, fan_in, fan_out| glorot(&mut rng, IxDyn(&shape), fan_in, fan_out))
    }

    fn build(cfg: &ModelConfig, weight: &mut dyn FnMut(Vec<usize>, usize, usize) -> ArrayD<T>) -> Self {
        fn fix<T, D: Dimension>(a: ArrayD<T>) -> ndarray::Array<T, D> {
            a.into_dimensionality().expect("shape built for this rank")
        }
        let mut conv = |cin: usize, spec: super::config::ConvSpec| ConvParams {
            kernel: fix(weight(vec![spec.filters, cin, spec.kernel], cin * spec.kernel, spec.filters * spec.kernel)),
            bias: Array1::zeros(spec.filters),
        };
        let conv1 = conv(cfg.input_channels, cfg.conv1);
        let conv2 = conv(cfg.conv1.filters, cfg.conv2);
        let bn = |c: usize| BatchNormParams {
            gamma: Array1::ones(c),
            beta: Array1::zeros(c),
            running_mean: Array1::zeros(c),
            running_var: Array1::ones(c),
        };
        let gru = (0..cfg.gru_sets)
            .map(|_| {
                let mut input = cfg.conv2.filters;
                cfg.gru_units
                    .iter()
                    .map(|&units| {
                        let mut w = || fix(weight(vec![input, units], input, units));
                        let (w_z, w_r, w_h) = (w(), w(), w());
                        let mut u = || fix(weight(vec![units, units], units, units));
                        let (u_z, u_r, u_h) = (u(), u(), u());
                        let b = || Array1::zeros(units);
                        input = units;
                        GruLayerParams { w_z, w_r, w_h, u_z, u_r, u_h, b_z: b(), b_r: b(), b_h: b() }
                    })
                    .collect()
            })
            .collect();
        let mut input = cfg.gru_output();
        let dense = cfg
            .dense_units
            .iter()
            .chain(std::iter::once(&cfg.n_classes))
            .map(|&units| {
                let d = DenseParams { weight: fix(weight(vec![input, units], input, units)), bias: Array1::zeros(units) };
                input = units;
                d
            })
            .collect();
        Self { conv1, bn1: bn(cfg.conv1.filters), conv2, bn2: bn(cfg.conv2.filters), gru, dense }
    }

    /// Every tensor in canonical order with its stable name.
    pub fn tensors<'a>(&'a self) -> Vec<TensorRef<'a, T>> {
        let mut out = Vec::new();
        let mut push = |name: String, trainable: bool, view: ArrayViewD<'a, T>| {
            out.push(TensorRef { name, trainable, view })
        };
        // Identical traversal to tensors_mut; keep the two in sync.
        for (i, (c, b)) in [(&self.conv1, &self.bn1), (&self.conv2, &self.bn2)].into_iter().enumerate() {
            let n = i + 1;
            push(format!("conv{n}.kernel"), true, c.kernel.view().into_dyn());
            push(format!("conv{n}.bias"), true, c.bias.view().into_dyn());
            push(format!("bn{n}.gamma"), true, b.gamma.view().into_dyn());
            push(format!("bn{n}.beta"), true, b.beta.view().into_dyn());
            push(format!("bn{n}.running_mean"), false, b.running_mean.view().into_dyn());
            push(format!("bn{n}.running_var"), false, b.running_var.view().into_dyn());
        }
        for (s, stack) in self.gru.iter().enumerate() {
            for (l, g) in stack.iter().enumerate() {
                for (field, a) in [("w_z", &g.w_z), ("w_r", &g.w_r), ("w_h", &g.w_h), ("u_z", &g.u_z), ("u_r", &g.u_r), ("u_h", &g.u_h)] {
                    push(format!("gru{s}.layer{l}.{field}"), true, a.view().into_dyn());
                }
                for (field, a) in [("b_z", &g.b_z), ("b_r", &g.b_r), ("b_h", &g.b_h)] {
                    push(format!("gru{s}.layer{l}.{field}"), true, a.view().into_dyn());
                }
            }
        }
        let last = self.dense.len().saturating_sub(1);
        for (i, d) in self.dense.iter().enumerate() {
            let prefix = if i == last { "output".to_string() } else { format!("dense{}", i + 1) };
            push(format!("{prefix}.weight"), true, d.weight.view().into_dyn());
            push(format!("{prefix}.bias"), true, d.bias.view().into_dyn());
        }
        out
    }

    pub fn tensors_mut<'a>(&'a mut self) -> Vec<TensorMut<'a, T>> {
        let mut out = Vec::new();
        let mut push = |name: String, trainable: bool, view: ArrayViewMutD<'a, T>| {
            out.push(TensorMut { name, trainable, view })
        };
        for (i, (c, b)) in [(&mut self.conv1, &mut self.bn1), (&mut self.conv2, &mut self.bn2)].into_iter().enumerate() {
            let n = i + 1;
            push(format!("conv{n}.kernel"), true, c.kernel.view_mut().into_dyn());
            push(format!("conv{n}.bias"), true, c.bias.view_mut().into_dyn());
            push(format!("bn{n}.gamma"), true, b.gamma.view_mut().into_dyn());
            push(format!("bn{n}.beta"), true, b.beta.view_mut().into_dyn());
            push(format!("bn{n}.running_mean"), false, b.running_mean.view_mut().into_dyn());
            push(format!("bn{n}.running_var"), false, b.running_var.view_mut().into_dyn());
        }
        for (s, stack) in self.gru.iter_mut().enumerate() {
            for (l, g) in stack.iter_mut().enumerate() {
                let GruLayerParams { w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h } = g;
                for (field, a) in [("w_z", w_z), ("w_r", w_r), ("w_h", w_h), ("u_z", u_z), ("u_r", u_r), ("u_h", u_h)] {
                    push(format!("gru{s}.layer{l}.{field}"), true, a.view_mut().into_dyn());
                }
                for (field, a) in [("b_z", b_z), ("b_r", b_r), ("b_h", b_h)] {
                    push(format!("gru{s}.layer{l}.{field}"), true, a.view_mut().into_dyn());
                }
            }
        }
        let last = self.dense.len().saturating_sub(1);
        for (i, d) in self.dense.iter_mut().enumerate() {
            let prefix = if i == last { "output".to_string() } else { format!("dense{}", i + 1) };
            push(format!("{prefix}.weight"), true, d.weight.view_mut().into_dyn());
            push(format!("{prefix}.bias"), true, d.bias.view_mut().into_dyn());
        }
        out
    }

    /// `(name, shape)` for every tensor, in canonical order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.tensors().into_iter().map(|t| (t.name, t.view.shape().to_vec())).collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors().iter().filter(|t| t.trainable).map(|t| t.view.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.view.iter().all(|v| v.is_finite()))
    }

    /// Check that shapes match those `cfg` implies.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = ParameterSet::<T>::zeros(cfg).layout();
        let actual = self.layout();
        if expected != actual {
            let first = expected.iter().zip(&actual).find(|(e, a)| e != a);
            return Err(Error::shape(match first {
                Some((e, a)) => format!("expected tensor {} {:?}, found {} {:?}", e.0, e.1, a.0, a.1),
                None => format!("expected {} tensors, found {}", expected.len(), actual.len()),
            }));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let mut out = ParameterSet::<U>::zeros_like(self);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            let mut dst = dst.view;
            dst.zip_mut_with(&src.view, |d, &s| *d = U::lit(s.to_f64_lossy()));
        }
        out
    }

    fn zeros_like<S: Scalar>(other: &ParameterSet<S>) -> Self {
        let conv = |c: &ConvParams<S>| ConvParams { kernel: Array3::zeros(c.kernel.dim()), bias: Array1::zeros(c.bias.len()) };
        let bn = |b: &BatchNormParams<S>| {
            let c = b.gamma.len();
            BatchNormParams { gamma: Array1::zeros(c), beta: Array1::zeros(c), running_mean: Array1::zeros(c), running_var: Array1::zeros(c) }
        };
        Self {
            conv1: conv(&other.conv1),
            bn1: bn(&other.bn1),
            conv2: conv(&other.conv2),
            bn2: bn(&other.bn2),
            gru: other.gru.iter().map(|s| s.iter().map(|g| GruLayerParams::zeros(g.input_size(), g.units())).collect()).collect(),
            dense: other
                .dense
                .iter()
                .map(|d| DenseParams { weight: Array2::zeros(d.weight.dim()), bias: Array1::zeros(d.bias.len()) })
                .collect(),
        }
    }

    /// Zero tensor set with this set's shapes.
    pub fn zeros_shaped(&self) -> Self {
        Self::zeros_like(self)
    }

    /// Apply `f(self_value, other_value)` to every trainable element.
    pub fn zip_trainable_mut(&mut self, other: &Self, mut f: impl FnMut(&mut T, T)) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            if dst.trainable {
                let mut v = dst.view;
                v.zip_mut_with(&src.view, |d, &s| f(d, s));
            }
        }
    }
}
