//! Scalar abstraction shared by every solver in the crate.
//!
//! All numerics are written against [`Real`], which is implemented for `f32`
//! and `f64`. The concrete `f64` aliases at the crate root are what the
//! experiment pipeline and CLI use.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

pub use num_complex::Complex;

/// Floating-point scalar usable by the grid operators, the Krylov solver and
/// the spectral transforms.
pub trait Real: Float + FloatConst + FftNum + NumAssign + Default + Display + LowerExp + Sum + Debug + 'static {
    /// Converts an `f64` literal. Lossy for `f32`.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite scalar")
    }

    /// Counts and indices as scalars.
    #[inline]
    fn of_usize(v: usize) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("usize representable")
    }

    fn type_name() -> &'static str;
}

impl Real for f32 {
    fn type_name() -> &'static str {
        "f32"
    }
}

impl Real for f64 {
    fn type_name() -> &'static str {
        "f64"
    }
}

/// `true` when both parts are finite.
#[inline]
pub fn is_finite_c<T: Real>(z: Complex<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}
