//! Scalar abstraction shared by the numeric modules.

use nalgebra as na;
use num_traits as nt;

/// Floating point type the dynamics, covariance and constraint code is generic over.
///
/// Arithmetic and elementary functions come from [`na::RealField`]; conversions go
/// through `num-traits` so thresholds can be written once as `f64` literals.
pub trait Real:
    Copy + na::RealField + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + std::fmt::Debug
{
    /// Converts an `f64` constant into the scalar type.
    #[inline]
    fn lit(value: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(value).expect("f64 literal fits the scalar type")
    }

    /// Widens to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as nt::ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}
