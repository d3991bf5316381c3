//! Floating-point abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the estimators are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline(always)]
pub fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Lossy conversion to `f64`, used where a computation is carried out in double precision.
#[inline(always)]
pub fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Converts a count into the working scalar.
#[inline(always)]
pub fn count<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("count representable in scalar type")
}
