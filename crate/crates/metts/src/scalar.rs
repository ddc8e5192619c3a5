//! Scalar abstraction: the single trait bound every generic item uses.

use num_traits::{FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar underlying all tensor and matrix data in this crate.
///
/// Satisfied by `f32` and `f64`. The `nalgebra::RealField` supertrait brings
/// the dense eigendecomposition and SVD kernels plus the transcendental
/// functions; the num-traits bounds cover integer conversion. Complex data is
/// always `Complex<T>`, which nalgebra accepts wherever a `ComplexField` is
/// required.
pub trait Real:
    nalgebra::RealField
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Copy
    + Default
    + std::fmt::Display
    + std::fmt::LowerExp
    + serde::Serialize
{
    /// Lossless-enough conversion from `f64` (lossy only for `f32`, where the
    /// constants involved are still exactly representable or benign).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl<T> Real for T where
    T: nalgebra::RealField
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Copy
        + Default
        + std::fmt::Display
        + std::fmt::LowerExp
        + serde::Serialize
{
}
