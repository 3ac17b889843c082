//! Exact rational helpers.
//!
//! All constraint-side quantities (`p`, `q`, `x`, `y`, `η*`) are
//! [`BigRational`]s in lowest terms with a positive denominator.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, ToPrimitive, Zero};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn from_u128(v: u128) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Best-effort conversion for output columns. Huge values fall back to
/// scaling both sides down before dividing.
pub fn to_f64(r: &Rational) -> f64 {
    if let Some(f) = r.to_f64() {
        if f.is_finite() {
            return f;
        }
    }
    let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(1000);
    let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Parses `"17/20"`, `"0.85"`, `"-3"` or `"1e-2"`-free decimal text into an
/// exact rational. Decimal strings are taken literally (`"0.1"` is `1/10`).
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::validation("rational", format!("cannot parse {text:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::validation("rational", "zero denominator"));
        }
        return Ok(Rational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole
        .chars()
        .chain(frac.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits = format!("{whole}{frac}");
    let mut value = Rational::new(
        BigInt::from_str(&digits).map_err(|_| bad())?,
        num::pow(BigInt::from(10), frac.len()),
    );
    if neg {
        value = -value;
    }
    Ok(value)
}

/// `num/den` text, or just `num` for integers.
pub fn display(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
