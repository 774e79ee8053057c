//! Floating-point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable by the statistics, indicator and trainer code.
///
/// Implemented for every type with the required bounds, which in practice
/// means `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; panics only for types that cannot
    /// represent an `f64` at all.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("scalar type cannot represent f64")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("scalar type cannot represent usize")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
}

/// Linear interpolation that returns the lower endpoint exactly when the
/// fractional weight is zero (keeps infinities from turning into NaN).
#[inline]
pub(crate) fn lerp<T: Scalar>(lo: T, hi: T, frac: T) -> T {
    if frac == T::zero() {
        lo
    } else {
        lo + (hi - lo) * frac
    }
}
