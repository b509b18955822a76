//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the kinematics, dynamics and control code.
///
/// Implemented for `f32` and `f64`. Matrix algebra comes from `nalgebra`;
/// conversions and constants come from `num-traits`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + FloatConst + Default + Display + Debug
{
    /// Converts an `f64` literal. Infallible for the supported types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for [`Real::lit`].
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::lit(v)
}

/// Clamps `v` to `[-bound, bound]`; `bound` is assumed non-negative.
#[inline]
pub fn clamp_sym<T: Real>(v: T, bound: T) -> T {
    if v > bound {
        bound
    } else if v < -bound {
        -bound
    } else {
        v
    }
}
