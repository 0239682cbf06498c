//! Exact non-negative ratios.
//!
//! Coefficients are kept as reduced fractions of counts so that identities
//! such as `retention_part + viral_part == k_growth` hold with equality,
//! not within a float tolerance. Conversion to `f64` happens at the edges.

use std::fmt;
use std::ops::{Add, Mul};

use num_rational::Ratio as Fraction;
use num_traits::{ToPrimitive, Zero};
use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ratio(Fraction<u128>);

impl Ratio {
    /// `numer / denom`, or `None` when `denom` is zero.
    pub fn of(numer: u64, denom: u64) -> Option<Self> {
        (denom != 0).then(|| Ratio(Fraction::new(u128::from(numer), u128::from(denom))))
    }

    pub fn from_integer(n: u64) -> Self {
        Ratio(Fraction::from_integer(u128::from(n)))
    }

    pub fn zero() -> Self {
        Ratio(Fraction::zero())
    }

    pub fn numer(&self) -> u128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }

    /// `100 * self` rounded to the nearest integer, halves away from zero.
    pub fn percent_rounded(&self) -> u128 {
        let (n, d) = (self.numer(), self.denom());
        (200 * n + d) / (2 * d)
    }

    /// `100 * self` at full `f64` precision.
    pub fn percent(&self) -> f64 {
        (self.0 * Fraction::from_integer(100))
            .to_f64()
            .unwrap_or(f64::INFINITY)
    }
}

impl Add for Ratio {
    type Output = Ratio;

    fn add(self, rhs: Ratio) -> Ratio {
        Ratio(self.0 + rhs.0)
    }
}

impl Mul for Ratio {
    type Output = Ratio;

    fn mul(self, rhs: Ratio) -> Ratio {
        Ratio(self.0 * rhs.0)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_denominator_is_absent() {
        assert!(Ratio::of(3, 0).is_none());
        assert_eq!(Ratio::of(0, 7).unwrap(), Ratio::zero());
    }

    #[test]
    fn percent_rounds_half_away_from_zero() {
        assert_eq!(Ratio::of(1, 200).unwrap().percent_rounded(), 1); // 0.5%
        assert_eq!(Ratio::of(3, 200).unwrap().percent_rounded(), 2); // 1.5%
        assert_eq!(Ratio::of(1, 201).unwrap().percent_rounded(), 0);
        assert_eq!(Ratio::of(5, 297).unwrap().percent_rounded(), 2);
        assert_eq!(Ratio::of(54, 1080).unwrap().percent_rounded(), 5);
    }

    #[test]
    fn arithmetic_is_exact() {
        let a = Ratio::of(1, 3).unwrap();
        assert_eq!(a + a + a, Ratio::from_integer(1));
        assert_eq!(
            Ratio::of(2, 10).unwrap() + Ratio::of(9, 10).unwrap(),
            Ratio::of(11, 10).unwrap()
        );
    }
}
