//! Coefficient fields: exact rationals for every structural decision and
//! binary64 for the Monte Carlo layer.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational number.
pub type Rational = BigRational;

/// Relative epsilon below which binary64 coefficients are dropped.
pub const FLOAT_CANON_EPS: f64 = 1e-12;

/// A coefficient field usable by [`crate::poly::Polynomial`] and
/// [`crate::linalg::Matrix`].
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True when arithmetic in this field never rounds.
    const EXACT: bool;

    fn from_int(v: i64) -> Self;

    fn from_rational(r: &Rational) -> Self;

    fn to_f64(&self) -> f64;

    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }

    fn is_negative(&self) -> bool;

    /// Text of the absolute value, as used in canonical polynomial output.
    fn format_abs(&self) -> String;

    /// Whether `self` counts as zero during elimination on entries whose
    /// largest magnitude is `scale`.
    fn negligible(&self, scale: f64) -> bool;

    /// Removes the entries that the field treats as zero.
    fn prune<K: Ord>(terms: &mut BTreeMap<K, Self>);
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_int(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn to_f64(&self) -> f64 {
        // Ratio<BigInt>::to_f64 handles huge numerators and denominators.
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn magnitude(&self) -> f64 {
        Scalar::to_f64(&self.abs())
    }

    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }

    fn format_abs(&self) -> String {
        format_rational(&self.abs())
    }

    fn negligible(&self, _scale: f64) -> bool {
        self.is_zero()
    }

    fn prune<K: Ord>(terms: &mut BTreeMap<K, Self>) {
        terms.retain(|_, c| !c.is_zero());
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn from_rational(r: &Rational) -> Self {
        Scalar::to_f64(r)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_negative(&self) -> bool {
        *self < 0.0
    }

    fn format_abs(&self) -> String {
        format!("{}", self.abs())
    }

    fn negligible(&self, scale: f64) -> bool {
        self.abs() <= FLOAT_CANON_EPS * scale
    }

    fn prune<K: Ord>(terms: &mut BTreeMap<K, Self>) {
        let largest = terms.values().fold(0.0_f64, |m, c| m.max(c.abs()));
        terms.retain(|_, c| *c != 0.0 && c.abs() > FLOAT_CANON_EPS * largest);
    }
}

/// Converts a binary64 value to the exact rational it represents.
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// Parses "a", "-a", "a/b" or a plain decimal such as "0.25" or "-1.5e-3"
/// into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().ok()?;
        let d: BigInt = den.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(all.parse::<BigInt>().ok()?);
    let shift = exponent - frac_part.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if shift >= 0 {
        value *= num_traits::pow(ten, shift as usize);
    } else {
        value /= num_traits::pow(ten, (-shift) as usize);
    }
    Some(if negative { -value } else { value })
}

/// Formats a rational as "a" or "a/b".
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parses_fraction_and_decimal_literals() {
        assert_eq!(parse_rational("3/6"), Some(q(1, 2)));
        assert_eq!(parse_rational("-7"), Some(q(-7, 1)));
        assert_eq!(parse_rational("0.1"), Some(q(1, 10)));
        assert_eq!(parse_rational("-1.5e-3"), Some(q(-3, 2000)));
        assert_eq!(parse_rational("2e2"), Some(q(200, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational("."), None);
    }

    #[test]
    fn float_prune_is_relative() {
        let mut m = BTreeMap::new();
        m.insert(0, 1.0);
        m.insert(1, 1e-13);
        m.insert(2, 0.0);
        m.insert(3, 1e-11);
        f64::prune(&mut m);
        assert_eq!(m.keys().copied().collect::<Vec<_>>(), vec![0, 3]);
    }

    #[test]
    fn exact_round_trip_of_binary64() {
        let r = rational_from_f64(0.1).unwrap();
        assert_eq!(Scalar::to_f64(&r), 0.1);
        assert_ne!(r, q(1, 10));
    }
}
