//! Numeric field abstraction shared by the sweeps and solvers.
//!
//! `f64` is the working type; `BigRational` gives exact answers on
//! oracle-scale instances.

use std::fmt::Debug;

use num::{BigRational, FromPrimitive, Num, Signed, ToPrimitive};

pub use num::BigRational as Rational;

pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + Send + Sync + 'static
{
    /// Exact arithmetic (no rounding anywhere).
    const EXACT: bool;

    fn to_f64(&self) -> f64;

    /// Lossless for rationals: every finite `f64` is a dyadic rational.
    fn lift(v: f64) -> Self;

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn to_f64(&self) -> f64 {
        *self
    }

    fn lift(v: f64) -> Self {
        v
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn lift(v: f64) -> Self {
        BigRational::from_float(v).expect("finite value")
    }
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(num.into(), den.into())
}

pub fn convert<T: Scalar>(values: &[f64]) -> Vec<T> {
    values.iter().map(|&v| T::lift(v)).collect()
}
