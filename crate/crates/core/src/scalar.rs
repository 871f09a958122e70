//! Scalar abstraction for the geometric core.
//!
//! The alignment solver and pose metrics are written once over [`Real`] and
//! instantiated for `f32` and `f64`. Storage formats and the simulator use
//! `f64` directly.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type usable by the solver: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Tolerance for unit-norm and orthonormality checks at this precision.
    fn unit_tolerance() -> Self;

    /// Relative singular-value cutoff used for rank decisions.
    fn rank_tolerance() -> Self;

    /// Converts an `f64` literal. Every `f64` is representable (with rounding)
    /// in both supported types.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn unit_tolerance() -> Self {
        1e-9
    }

    fn rank_tolerance() -> Self {
        1e-10
    }
}

impl Real for f32 {
    fn unit_tolerance() -> Self {
        1e-4
    }

    fn rank_tolerance() -> Self {
        1e-5
    }
}
