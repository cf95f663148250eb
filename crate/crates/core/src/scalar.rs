//! Scalar abstraction for the numeric stages.
//!
//! Everything numeric (autoencoder, SVD, k-means, quality indices) is generic
//! over [`Scalar`] so the same code runs in f32 or f64. The pipeline itself
//! runs in f64 and persists artifacts as little-endian f32 (see [`crate::binio`]).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from f64 (exact for f64, rounded for f32).
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in any Scalar")
    }

    /// Conversion from usize; exact for the sizes this crate handles.
    fn from_usize_c(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable in any Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
