//! Scalar backends.
//!
//! Two backends are used throughout: exact rationals for algebraic identity
//! checks and `f64` for the estimators. Conversion between them is always an
//! explicit call ([`as_f64`](RealScalar::as_f64), [`Scalar::from_rational`]).

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// A structure coefficient kept in both backends so float evaluation does
/// not re-convert on every use.
#[derive(Clone, Debug, PartialEq)]
pub struct Coeff {
    pub exact: Rational,
    pub float: f64,
}

impl Coeff {
    pub fn new(exact: Rational) -> Self {
        let float = ToPrimitive::to_f64(&exact).unwrap_or(f64::NAN);
        Coeff { exact, float }
    }
}

/// Ring operations needed to evaluate brackets and the BCH series.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Send
    + Sync
    + 'static
{
    fn from_rational(q: &Rational) -> Self;

    fn from_coeff(c: &Coeff) -> Self {
        Self::from_rational(&c.exact)
    }

    fn powi(&self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc = acc * self.clone();
        }
        acc
    }
}

/// Ordered scalars (the two numeric backends, not the symbolic one).
pub trait RealScalar: Scalar + PartialOrd {
    fn as_f64(&self) -> f64;
}

impl Scalar for Rational {
    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }
}

impl RealScalar for Rational {
    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn from_rational(q: &Rational) -> Self {
        ToPrimitive::to_f64(q).unwrap_or(f64::NAN)
    }

    fn from_coeff(c: &Coeff) -> Self {
        c.float
    }

    fn powi(&self, k: u32) -> Self {
        f64::powi(*self, k as i32)
    }
}

impl RealScalar for f64 {
    fn as_f64(&self) -> f64 {
        *self
    }
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parse `"p/q"`, `"p"` or a finite decimal such as `"-0.25"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        let neg = ip.trim_start().starts_with('-');
        let ip_abs = ip.trim_start_matches(['-', '+']);
        let digits = format!("{}{}", if ip_abs.is_empty() { "0" } else { ip_abs }, fp);
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let num: BigInt = digits.parse().map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), fp.len());
        let q = Rational::new(num, den);
        return Ok(if neg { -q } else { q });
    }
    let p: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(p))
}

/// Canonical text form: `"p"` for integers, `"p/q"` otherwise (reduced).
pub fn format_rational(q: &Rational) -> String {
    q.to_string()
}

pub fn parse_rational_list(s: &str) -> Result<Vec<Rational>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_rational).collect()
}

pub fn format_rational_list(v: &[Rational]) -> String {
    v.iter().map(format_rational).collect::<Vec<_>>().join(",")
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .or_else(|_| parse_rational(t).map(|q| q.as_f64()))
                .map_err(|_| Error::Parse(format!("not a number: {t:?}")))
        })
        .collect()
}

pub fn to_f64_vec(v: &[Rational]) -> Vec<f64> {
    v.iter().map(RealScalar::as_f64).collect()
}

/// Exact conversion of a finite float to a rational.
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// Small random rational with numerator in `[-num, num]` and denominator in `[1, den]`.
pub fn random_rational<R: Rng + ?Sized>(rng: &mut R, num: i64, den: i64) -> Rational {
    let p = rng.random_range(-num..=num);
    let q = rng.random_range(1..=den);
    rat(p, q)
}

pub fn random_positive_rational<R: Rng + ?Sized>(rng: &mut R, num: i64, den: i64) -> Rational {
    let p = rng.random_range(1..=num);
    let q = rng.random_range(1..=den);
    rat(p, q)
}

pub fn abs_max(v: &[Rational]) -> Rational {
    v.iter().map(|q| q.abs()).fold(Rational::zero(), |a, b| if b > a { b } else { a })
}

pub fn factorial(k: u32) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("1/3").unwrap(), rat(1, 3));
        assert_eq!(parse_rational("-4/6").unwrap(), rat(-2, 3));
        assert_eq!(parse_rational("7").unwrap(), int(7));
        assert_eq!(parse_rational("-0.25").unwrap(), rat(-1, 4));
        assert_eq!(parse_rational("1.5").unwrap(), rat(3, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn format_round_trip() {
        for q in [rat(1, 3), rat(-5, 7), int(4), int(0)] {
            assert_eq!(parse_rational(&format_rational(&q)).unwrap(), q);
        }
        assert_eq!(format_rational(&rat(2, 4)), "1/2");
    }
}
