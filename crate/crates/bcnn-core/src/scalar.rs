use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type for tensors and layers.
///
/// Training runs at `f32`; gradient verification instantiates the same layer
/// code at `f64` so central finite differences with step 1e-5 are meaningful.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Send + Sync + Debug + Display + 'static
{
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
    fn from_f32_c(v: f32) -> Self {
        Self::from_f32(v).expect("f32 constant representable")
    }
    fn to_f32_c(self) -> f32 {
        self.to_f32().expect("scalar convertible to f32")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
