//! Scalar abstraction shared by every deterministic model in the crate.
//!
//! Models are written once against [`Real`] and instantiated for `f32` and
//! `f64`. Stochastic statistics that lean on special functions from `statrs`
//! (Poisson goodness-of-fit, photon-arrival histograms) are `f64` only.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating point scalar usable by the physics and fitting code.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn erf(self) -> Self;
    fn erfc(self) -> Self;

    /// Literal conversion; every `f64` literal used in the models is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in target scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Standard normal cumulative distribution.
    #[inline]
    fn norm_cdf(self) -> Self {
        Self::lit(0.5) * (-self * Self::FRAC_1_SQRT_2()).erfc()
    }
}

impl Real for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// Shorthand for [`Real::lit`].
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_cdf_matches_known_values() {
        assert!((0.0f64.norm_cdf() - 0.5).abs() < 1e-15);
        assert!((1.959963984540054f64.norm_cdf() - 0.975).abs() < 1e-12);
        assert!(((-1.0f32).norm_cdf() - 0.158_655_26).abs() < 1e-6);
    }
}
