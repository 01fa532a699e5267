//! Scalar abstraction shared by every numeric routine.

use std::fmt;

use nalgebra as na;
use num_traits as nt;

/// Floating point types the toolkit can run on.
pub trait Real:
    Copy
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + na::RealField
    + na::Scalar
    + fmt::Display
    + fmt::LowerExp
{
    /// Machine epsilon.
    const EPS: Self;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        na::convert(x)
    }

    /// Widen to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}

/// Shorthand for [`Real::lit`].
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}
