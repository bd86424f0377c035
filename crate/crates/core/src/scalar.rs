//! Floating point abstraction shared by the density, model and filter code.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// A real scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Sum + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
