//! Scalar types usable as probability masses.

use std::fmt::Debug;

use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// A number type that can carry probability mass.
///
/// Floating point types normalize up to a tolerance; rationals are exact and
/// use a zero tolerance, which is what the exact enumeration checks rely on.
pub trait Probability:
    Num + Signed + PartialOrd + Clone + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Allowed deviation of the total mass from one.
    fn normalization_tolerance() -> Self;

    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Probability for f64 {
    fn normalization_tolerance() -> Self {
        1e-9
    }
}

impl Probability for f32 {
    fn normalization_tolerance() -> Self {
        1e-5
    }
}

impl Probability for Ratio<i64> {
    fn normalization_tolerance() -> Self {
        Ratio::from_integer(0)
    }
}

impl Probability for BigRational {
    fn normalization_tolerance() -> Self {
        BigRational::from_integer(0.into())
    }
}

/// Larger of two partially ordered values; the left one wins on ties and NaN.
pub fn pmax<P: Probability>(a: P, b: P) -> P {
    if b > a {
        b
    } else {
        a
    }
}
