//! Scalar abstraction shared by the generic geometry code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type usable by the geometric kernels: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync {
    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
