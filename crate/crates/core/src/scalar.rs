//! Scalar abstraction shared by the exact and floating-point code paths.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, ToPrimitive};

/// A field-like number type that can be built from small ratios.
///
/// Implemented for `f32`, `f64` and the exact [`BigRational`]. Code written
/// against `Scalar` gives exact answers when instantiated with the rational
/// and fast approximate ones with floats.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    fn from_ratio(num: u64, den: u64) -> Self;

    fn from_big_rational(r: &BigRational) -> Self;

    fn as_f64(&self) -> f64;

    fn from_u64(n: u64) -> Self {
        Self::from_ratio(n, 1)
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn from_big_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn as_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_ratio(num: u64, den: u64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn from_big_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN) as f32
    }

    fn as_f64(&self) -> f64 {
        *self as f64
    }
}

impl Scalar for BigRational {
    fn from_ratio(num: u64, den: u64) -> Self {
        Ratio::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_big_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}
