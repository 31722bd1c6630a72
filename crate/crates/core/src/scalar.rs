//! Numeric abstraction shared by the metric and ranking code.
//!
//! Metrics are ratios of counts, so every routine that produces one is
//! generic over [`Scalar`]. Floating point types serve the reporting path and
//! [`num_rational::Ratio`] gives exact answers where a test needs them.

use num_rational::Ratio;
use num_traits::Num;
use std::fmt::Debug;

pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    fn from_count(n: usize) -> Self;

    fn to_f64(self) -> f64;

    /// `num / den`, with an empty denominator mapped to zero.
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Self::zero()
        } else {
            Self::from_count(num) / Self::from_count(den)
        }
    }
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for Ratio<u64> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as u64)
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Scalar for Ratio<i64> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact_for_rationals() {
        let r: Ratio<u64> = Scalar::ratio(2, 4);
        assert_eq!(r, Ratio::new(1, 2));
        assert_eq!(<f64 as Scalar>::ratio(3, 0), 0.0);
        assert_eq!(<Ratio<i64> as Scalar>::ratio(1, 3).to_f64(), 1.0 / 3.0);
    }
}
