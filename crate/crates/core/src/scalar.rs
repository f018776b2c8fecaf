//! Numeric abstractions shared by the simulator.
//!
//! Everything that touches rewards or expected pull counts is generic over a
//! [`Scalar`] (`f32` or `f64`). The trimmed-mean filter only needs field
//! operations and an order, so it is generic over the weaker [`Field`] bound
//! and also runs on exact rationals.

use std::fmt::{self, Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Ordered field values: enough for averaging and comparing reports.
pub trait Field: Num + Copy + PartialOrd + Debug {}

impl<T: Num + Copy + PartialOrd + Debug> Field for T {}

/// Floating point scalar: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Field + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or config value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `2^-m` computed exactly for the range of epochs a run can reach.
pub fn pow2_neg<S: Scalar>(m: u32) -> S {
    S::lit(0.5f64.powi(m as i32))
}

/// `4^(m-1)`, i.e. `2^(2(m-1))`, for epoch `m >= 1`.
pub fn pow4_epoch<S: Scalar>(m: u32) -> S {
    debug_assert!(m >= 1);
    S::lit(4f64.powi(m as i32 - 1))
}

/// The tolerated Byzantine/corrupted fraction `alpha`, kept as an exact
/// fraction so that quorum sizes such as `(1 - 2 alpha) |N|` are compared
/// without rounding error.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tolerance(Ratio<u64>);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ToleranceError {
    #[error("fraction must lie in [0, 0.5), got {0}")]
    OutOfRange(String),
    #[error("cannot parse `{0}` as a fraction")]
    Parse(String),
}

impl Tolerance {
    pub const ZERO: Tolerance = Tolerance(Ratio::new_raw(0, 1));

    pub fn new(numer: u64, denom: u64) -> Result<Self, ToleranceError> {
        if denom == 0 {
            return Err(ToleranceError::Parse(format!("{numer}/{denom}")));
        }
        let r = Ratio::new(numer, denom);
        if r * 2 >= Ratio::from_integer(1) {
            return Err(ToleranceError::OutOfRange(format!("{numer}/{denom}")));
        }
        Ok(Tolerance(r))
    }

    /// Nearest simple fraction to `x` (continued-fraction approximation).
    pub fn from_f64(x: f64) -> Result<Self, ToleranceError> {
        if !(0.0..0.5).contains(&x) {
            return Err(ToleranceError::OutOfRange(x.to_string()));
        }
        let r = Ratio::<u64>::approximate_float_unsigned(x)
            .ok_or_else(|| ToleranceError::Parse(x.to_string()))?;
        Tolerance::new(*r.numer(), *r.denom())
    }

    pub fn one_third() -> Self {
        Tolerance(Ratio::new(1, 3))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// `1 - 2 alpha` as a scalar.
    pub fn keep_factor<S: Scalar>(&self) -> S {
        S::lit((self.denom() - 2 * self.numer()) as f64 / self.denom() as f64)
    }

    /// `count < (1 - 2 alpha) * size`, evaluated exactly.
    pub fn below_quorum(&self, count: usize, size: usize) -> bool {
        let (p, d) = (self.numer() as u128, self.denom() as u128);
        (count as u128) * d < (d - 2 * p) * size as u128
    }

    /// `max(0, floor((kept - (1 - 2 alpha) size) / 2))`, evaluated exactly.
    pub fn trim_count(&self, kept: usize, size: usize) -> usize {
        let (p, d) = (self.numer() as i128, self.denom() as i128);
        let excess = kept as i128 * d - (d - 2 * p) * size as i128;
        if excess <= 0 {
            0
        } else {
            (excess / (2 * d)) as usize
        }
    }

    /// `count <= alpha * size`, evaluated exactly.
    pub fn admits(&self, count: usize, size: usize) -> bool {
        (count as u128) * self.denom() as u128 <= self.numer() as u128 * size as u128
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::one_third()
    }
}

impl Debug for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tolerance({self})")
    }
}

impl Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Tolerance {
    type Err = ToleranceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n = n.trim().parse().map_err(|_| ToleranceError::Parse(s.into()))?;
                let d = d.trim().parse().map_err(|_| ToleranceError::Parse(s.into()))?;
                Tolerance::new(n, d)
            }
            None => {
                let x: f64 = s.parse().map_err(|_| ToleranceError::Parse(s.into()))?;
                Tolerance::from_f64(x)
            }
        }
    }
}

impl Serialize for Tolerance {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Tolerance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(u64),
            Float(f64),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s.parse(),
            Raw::Int(i) => Tolerance::new(i, 1),
            Raw::Float(x) => Tolerance::from_f64(x),
        };
        parsed.map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_third_quorum_is_exact() {
        let a = Tolerance::one_third();
        // (1 - 2/3) * 3 = 1 exactly; floating point would give 1.0000000000000002.
        assert!(!a.below_quorum(1, 3));
        assert!(a.below_quorum(0, 3));
        assert_eq!(a.trim_count(3, 3), 1);
        assert_eq!(a.trim_count(6, 6), 2);
        assert_eq!(a.trim_count(10, 10), 3);
        assert_eq!(a.trim_count(1, 3), 0);
        assert_eq!(a.trim_count(0, 3), 0);
    }

    #[test]
    fn parses_fraction_and_float() {
        assert_eq!("1/3".parse::<Tolerance>().unwrap(), Tolerance::one_third());
        assert_eq!("0.25".parse::<Tolerance>().unwrap(), Tolerance::new(1, 4).unwrap());
        assert_eq!(Tolerance::from_f64(1.0 / 3.0).unwrap(), Tolerance::one_third());
        assert_eq!("0".parse::<Tolerance>().unwrap(), Tolerance::ZERO);
    }

    #[test]
    fn rejects_half_and_above() {
        assert!(matches!("0.5".parse::<Tolerance>(), Err(ToleranceError::OutOfRange(_))));
        assert!(matches!("1/2".parse::<Tolerance>(), Err(ToleranceError::OutOfRange(_))));
        assert!("-0.1".parse::<Tolerance>().is_err());
        assert!("abc".parse::<Tolerance>().is_err());
    }

    #[test]
    fn admits_alpha_fraction() {
        let a = Tolerance::one_third();
        assert!(a.admits(1, 3));
        assert!(!a.admits(2, 4));
        assert!(a.admits(1, 4));
    }

    #[test]
    fn keep_factor_values() {
        assert_eq!(Tolerance::ZERO.keep_factor::<f64>(), 1.0);
        assert!((Tolerance::one_third().keep_factor::<f64>() - 1.0 / 3.0).abs() < 1e-15);
    }
}
