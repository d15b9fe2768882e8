//! Scalar abstraction so every dynamics routine runs on plain `f64` or on
//! dual numbers without code changes.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Real-like scalar: `f64` and [`crate::dual::Dual`] implement this.
///
/// Branch decisions (comparisons, step-count schedules) must be taken on the
/// primal part only, so that a dual-valued run retraces the real-valued run
/// operation for operation.
pub trait Real:
    Copy
    + Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn from_f64(x: f64) -> Self;
    /// Primal (real) part.
    fn re(self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn cosh(self) -> Self;
    /// |x| with tangent sign(x); the tangent at x = 0 is 0.
    fn abs(self) -> Self;
    /// Picks the argument with the larger primal; ties take `self`.
    fn max(self, other: Self) -> Self;
    /// Picks the argument with the smaller primal; ties take `self`.
    fn min(self, other: Self) -> Self;
    /// x^e for x ≥ 0. At x = 0 the tangent is forced to 0: every use site
    /// composes this with an inner function whose derivative vanishes there.
    fn powf_nonneg(self, e: Self) -> Self;

    fn is_finite(self) -> bool {
        self.re().is_finite()
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        if other.re() > self.re() {
            other
        } else {
            self
        }
    }
    #[inline]
    fn min(self, other: Self) -> Self {
        if other.re() < self.re() {
            other
        } else {
            self
        }
    }
    #[inline]
    fn powf_nonneg(self, e: Self) -> Self {
        if self == 0.0 {
            0.0
        } else {
            f64::powf(self, e)
        }
    }
}

/// tanh(r)/r evaluated from r² so it stays smooth through r = 0.
///
/// Saturating force laws factor as F = k·z·tanhc(r) with r² a polynomial in
/// z, which removes the 0/0 of the σ·tanh(k|z|/σ)·z/|z| form at the origin.
#[inline]
pub fn tanhc_from_sq<T: Real>(r_sq: T) -> T {
    if r_sq.re() < 1e-8 {
        // tanh(r)/r = 1 − r²/3 + 2r⁴/15 − …
        let c1 = T::from_f64(1.0 / 3.0);
        let c2 = T::from_f64(2.0 / 15.0);
        T::one() - r_sq * c1 + r_sq * r_sq * c2
    } else {
        let r = r_sq.sqrt();
        r.tanh() / r
    }
}

/// ln(cosh(r)) evaluated from r², smooth through r = 0.
#[inline]
pub fn ln_cosh_from_sq<T: Real>(r_sq: T) -> T {
    if r_sq.re() < 1e-8 {
        // ln cosh r = r²/2 − r⁴/12 + …
        let half = T::from_f64(0.5);
        let c2 = T::from_f64(1.0 / 12.0);
        r_sq * half - r_sq * r_sq * c2
    } else {
        r_sq.sqrt().cosh().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanhc_matches_direct_evaluation() {
        for &r in &[1e-3, 0.1, 0.5, 2.0, 10.0] {
            let direct = (r as f64).tanh() / r;
            let via = tanhc_from_sq(r * r);
            assert!((direct - via).abs() < 1e-12, "r={r}");
        }
        assert_eq!(tanhc_from_sq(0.0_f64), 1.0);
    }

    #[test]
    fn ln_cosh_series_branch_agrees() {
        // r² just below the series cutoff; the direct path loses ~1 ulp in
        // cosh near 1, so compare at that level.
        let r = 9e-5_f64;
        let direct = r.cosh().ln();
        let via = ln_cosh_from_sq(r * r);
        assert!((direct - via).abs() < 1e-15, "direct {direct} vs series {via}");
    }
}
