//! Scalar abstraction: every numeric routine in this crate is generic over a
//! floating-point type implementing [`Real`].
//!
//! The crate root exports `f64` aliases for the main types; `f64` is the
//! precision used by the CLI and all shipped experiments, since reach ratios
//! suffer catastrophic cancellation near tangency. `f32` remains available
//! for memory-bound callers that can tolerate the loss.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into the working scalar type.
///
/// Panics if the value is not representable, which cannot happen for the
/// fixed literals this crate feeds it.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}
