//! Floating-point scalar abstraction shared by the numeric modules.
//!
//! The spectral solver, the forest and the metrics are written against
//! [`Scalar`] so they run in `f32` or `f64`. Graph data (satoshis, policies)
//! stays integral and is converted at the module boundary.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + FromStr
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Residual tolerance for eigenpairs: `1e-10` in double precision, scaled
    /// up from machine epsilon for narrower types.
    fn eig_tolerance() -> Self {
        let floor = Self::epsilon() * Self::of(1.0e4);
        Self::of(1.0e-10).max(floor)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_tracks_precision() {
        assert_eq!(f64::eig_tolerance(), 1.0e-10);
        assert!(f32::eig_tolerance() > 1.0e-4);
    }
}
