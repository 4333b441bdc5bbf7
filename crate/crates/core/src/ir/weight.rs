use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Execution weight of a block.
///
/// Profiles produce integer counts; inlining and tail duplication scale them
/// by ratios of counts. Weights are kept as exact rationals so that scaling a
/// whole profile by a constant never changes a comparison between weights.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(BigRational);

impl Default for Weight {
    fn default() -> Self {
        Weight::zero()
    }
}

impl Weight {
    pub fn zero() -> Self {
        Weight(BigRational::zero())
    }

    pub fn from_count(n: u64) -> Self {
        Weight(BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact value of a finite, non-negative float.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !(x.is_finite() && x >= 0.0) {
            return None;
        }
        BigRational::from_float(x).map(Weight)
    }

    /// The shortest decimal that prints as `x`, so `0.2` means exactly 1/5.
    pub fn from_decimal(x: f64) -> Option<Self> {
        if !(x.is_finite() && x >= 0.0) {
            return None;
        }
        let s = format!("{x}");
        let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
        let digits: BigInt = format!("{int}{frac}").parse().ok()?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        Some(Weight(BigRational::new(digits, den)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// `self * num / den`, treating a zero denominator as one.
    pub fn scaled(&self, num: &Weight, den: &Weight) -> Weight {
        if den.is_zero() {
            Weight(&self.0 * &num.0)
        } else {
            Weight(&self.0 * &num.0 / &den.0)
        }
    }

    /// `self / other`, or `None` when `other` is zero.
    pub fn ratio(&self, other: &Weight) -> Option<BigRational> {
        (!other.is_zero()).then(|| &self.0 / &other.0)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::MAX)
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    /// Nearest integer count, halves rounded away from zero.
    pub fn round_count(&self) -> u64 {
        self.0.round().to_integer().to_u64().unwrap_or(u64::MAX)
    }
}

impl From<BigRational> for Weight {
    fn from(r: BigRational) -> Self {
        assert!(!r.is_negative(), "negative weight");
        Weight(r)
    }
}

impl<'a> Add<&'a Weight> for &'a Weight {
    type Output = Weight;
    fn add(self, rhs: &Weight) -> Weight {
        Weight(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Weight> for &'a Weight {
    type Output = Weight;
    /// Saturates at zero.
    fn sub(self, rhs: &Weight) -> Weight {
        let d = &self.0 - &rhs.0;
        if d.is_negative() {
            Weight::zero()
        } else {
            Weight(d)
        }
    }
}

impl<'a> Mul<&'a Weight> for &'a Weight {
    type Output = Weight;
    fn mul(self, rhs: &Weight) -> Weight {
        Weight(&self.0 * &rhs.0)
    }
}

impl std::iter::Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Self {
        iter.fold(Weight::zero(), |acc, w| &acc + &w)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid weight `{0}`")]
pub struct WeightParseError(String);

impl FromStr for Weight {
    type Err = WeightParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || WeightParseError(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: BigInt = n.parse().map_err(|_| err())?;
        let d: BigInt = d.parse().map_err(|_| err())?;
        if n.is_negative() || !d.is_positive() {
            return Err(err());
        }
        Ok(Weight(BigRational::new(n, d)))
    }
}
