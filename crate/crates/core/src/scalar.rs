//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real floating-point scalar the engine is generic over.
///
/// Implemented for `f32` and `f64`. The interior-point tolerances shipped as
/// defaults assume `f64`; `f32` callers should loosen them.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts a count into `Self`.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `log2(1 + x)` computed through `ln_1p` for accuracy near zero.
#[inline]
pub fn log2_1p<T: Real>(x: T) -> T {
    x.ln_1p() / T::LN_2()
}

/// Converts dBm to Watts: `10^((dBm - 30) / 10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts Watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_dbm_is_one_watt() {
        assert_eq!(dbm_to_watts(30.0), 1.0);
        assert_eq!(watts_to_dbm(1.0), 30.0);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-15);
        assert!((dbm_to_watts(-60.0) - 1e-9).abs() < 1e-24);
    }

    #[test]
    fn log2_1p_matches_direct_formula() {
        assert!((log2_1p(1.0f64) - 1.0).abs() < 1e-15);
        assert!((log2_1p(0.5f64) - 1.5f64.log2()).abs() < 1e-15);
        assert!((log2_1p(3.0f32) - 2.0).abs() < 1e-6);
    }
}
