//! Scalar abstraction shared by the generic geometry, profile, map and cone code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the generic core (`f32`, `f64`).
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal; every supported scalar can represent (a rounding of) it.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;
}

impl Scalar for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

impl Scalar for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}
