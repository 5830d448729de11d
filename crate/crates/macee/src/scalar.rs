//! Scalar abstraction: every numeric routine in this crate is generic over
//! the underlying IEEE float type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar underlying all matrix and game arithmetic.
///
/// Implemented for `f32` and `f64`. The `f64` instantiation is what the CLI
/// and the experiment harness use; the stated tolerances throughout the crate
/// assume it. `f32` is available for quick genericity checks at reduced
/// precision.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Convert an `f64` literal (tolerances, defaults) into the scalar type.
    fn real(x: f64) -> Self {
        Self::from_f64(x).expect("literal must be representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
