use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

/// Real scalar the solvers are generic over.
///
/// Implemented for `f32` and `f64`. All tolerances quoted in the tests and
/// the acceptance suite assume `f64`.
pub trait Real:
    Float + FloatConst + FftNum + NumAssign + Default + Debug + Display + LowerExp + FromStr + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
