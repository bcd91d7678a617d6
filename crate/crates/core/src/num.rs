//! Scalar abstraction shared by the DSP chain and the network.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating point type the whole crate is generic over.
///
/// Implemented for `f32` (training and inference) and `f64` (oracles and
/// gradient checks). Matrix products go through `ndarray`, which dispatches
/// both to the optimized GEMM kernels.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Number of bytes in the storage representation.
    const BYTES: usize;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            const BYTES: usize = std::mem::size_of::<$t>();
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Convert a slice between scalar types.
pub fn cast_vec<A: Scalar, B: Scalar>(xs: &[A]) -> Vec<B> {
    xs.iter().map(|&x| B::lit(x.to_f64_lossy())).collect()
}
