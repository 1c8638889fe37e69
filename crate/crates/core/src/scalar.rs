//! Scalar abstraction for the numeric core.
//!
//! Everything in this crate is generic over a real scalar type. `f64` is the
//! working default (see the aliases at the crate root); `f32` instantiates the
//! same code for cheap wide sweeps.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by every algorithm in this crate.
pub trait Scalar: RealField + FromPrimitive + ToPrimitive + Copy {
    /// Lossy conversion from `f64`, for tolerances and literals.
    fn from_f64_lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion from f64")
    }

    /// Lossy conversion to `f64`, for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar conversion to f64")
    }

    fn is_finite_scalar(self) -> bool {
        self.to_f64().map_or(false, f64::is_finite)
    }
}

impl<T: RealField + FromPrimitive + ToPrimitive + Copy> Scalar for T {}

/// Shorthand used pervasively for numeric literals in generic code.
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64_lit(x)
}
