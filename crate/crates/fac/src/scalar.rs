//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Real`], which is any
//! IEEE float with the conversions the algorithms need. In practice that
//! means `f32` or `f64`; the crate root re-exports `f64` aliases for the
//! common types so most callers never see the type parameter.

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used by all numeric code in this crate.
///
/// Implemented for `f32` and `f64`. The supertraits cover arithmetic
/// (`Float`), conversion from literals (`FromPrimitive`), accumulation
/// (`Sum`), formatting, and serialization of model types.
pub trait Real:
    Float
    + FromPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    ///
    /// # Panics
    ///
    /// Panics if the conversion fails, which cannot happen for `f32`/`f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert to scalar type")
    }

    /// Converts this scalar to `f64` (lossless for `f32` and `f64`).
    fn to64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product of two equal-length slices.
///
/// # Panics
///
/// Panics if the slices differ in length.
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean norm of a slice.
pub fn norm2<F: Real>(v: &[F]) -> F {
    dot(v, v).sqrt()
}

/// `out += c * v`, in place.
pub fn axpy<F: Real>(out: &mut [F], c: F, v: &[F]) {
    assert_eq!(out.len(), v.len(), "axpy: length mismatch");
    for (o, &x) in out.iter_mut().zip(v) {
        *o = *o + c * x;
    }
}

/// Largest absolute entry of a slice (zero for an empty slice).
pub fn max_abs<F: Real>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |m, &x| m.max(x.abs()))
}
