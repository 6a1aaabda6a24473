//! Scalar abstraction for embedding storage.

use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssignOps};

/// Floating-point type usable for embedding storage.
///
/// Arithmetic that decides ranks or losses is carried out in `f64`
/// regardless of the storage type; this trait only adds the two lossless
/// conversions that the compute kernels need.
pub trait Scalar:
    Float + NumAssignOps + Copy + Debug + Display + Send + Sync + 'static
{
    fn as_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f64 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Scalar for f32 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}
