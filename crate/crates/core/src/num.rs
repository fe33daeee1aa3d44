//! Scalar abstraction shared by every analytic routine.

use std::fmt::{Debug, Display, LowerExp};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the analytic model is written against: `f32` or `f64`.
///
/// The Monte Carlo oracle and the CLI are `f64`-only; everything else is
/// generic. Inversion accuracy targets (1e-6 on known pairs) are only
/// reachable in `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Exact rational value of this binary float.
    fn to_rational(self) -> Option<BigRational> {
        self.to_f64().and_then(BigRational::from_float)
    }
}

impl Real for f32 {
    fn to_rational(self) -> Option<BigRational> {
        BigRational::from_float(self)
    }
}

impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Ceiling of an exact rational, as an integer.
pub(crate) fn rational_ceil(q: &BigRational) -> BigInt {
    q.ceil().to_integer()
}

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_is_exact() {
        let q = 0.5f64.to_rational().unwrap();
        assert_eq!(q, BigRational::new(1.into(), 2.into()));
        // 0.1 is not exactly representable; the rational carries the binary value
        let q = 0.1f64.to_rational().unwrap();
        assert_ne!(q, BigRational::new(1.into(), 10.into()));
    }

    #[test]
    fn kahan_beats_naive() {
        let mut k = KahanSum::new();
        let mut naive = 0.0;
        for _ in 0..10_000_000 {
            k.add(0.1);
            naive += 0.1;
        }
        assert!((k.value() - 1.0e6).abs() < (naive - 1.0e6f64).abs());
        assert!((k.value() - 1.0e6).abs() < 1e-6);
    }
}
