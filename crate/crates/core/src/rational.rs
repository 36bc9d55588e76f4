//! Exact rational numbers used for every equilibrium, feasibility and tie decision.

use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact rational with 64-bit numerator and denominator.
pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse {input:?} as a rational: {reason}")]
pub struct ParseRationalError {
    pub input: String,
    pub reason: &'static str,
}

/// Parses `"p/q"`, `"p"` or a finite decimal such as `"0.125"`.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let err = |reason| ParseRationalError {
        input: text.to_string(),
        reason,
    };
    let s = text.trim();
    if s.is_empty() {
        return Err(err("empty string"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| err("bad numerator"))?;
        let den: i64 = den.trim().parse().map_err(|_| err("bad denominator"))?;
        if den == 0 {
            return Err(err("zero denominator"));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.len() > 15 || frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("bad decimal fraction"));
        }
        let negative = int.starts_with('-');
        let int_part: i64 = if int.is_empty() || int == "-" {
            0
        } else {
            int.parse().map_err(|_| err("bad integer part"))?
        };
        let den = 10i64.pow(frac.len() as u32);
        let frac_part: i64 = frac.parse().map_err(|_| err("bad decimal fraction"))?;
        let magnitude = int_part
            .abs()
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_part))
            .ok_or_else(|| err("overflow"))?;
        let num = if negative { -magnitude } else { magnitude };
        return Ok(Rational::new(num, den));
    }
    let num: i64 = s.parse().map_err(|_| err("not a number"))?;
    Ok(Rational::from_integer(num))
}

/// Canonical `"p/q"` form, or `"p"` for integers.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn is_nonnegative(r: &Rational) -> bool {
    !r.is_negative()
}

pub fn sum<'a, I: IntoIterator<Item = &'a Rational>>(items: I) -> Rational {
    items.into_iter().fold(Rational::zero(), |acc, x| acc + x)
}

/// Wrapper that serializes a rational as its `"p/q"` string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact(pub Rational);

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(&self.0))
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_rational(&text)
            .map(Exact)
            .map_err(serde::de::Error::custom)
    }
}

/// `serde(with = ...)` adapter for `Rational` fields.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        Exact(*r).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        Exact::deserialize(d).map(|e| e.0)
    }
}

/// `serde(with = ...)` adapter for `Vec<Rational>` fields.
pub mod serde_rational_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let wrapped: Vec<Exact> = v.iter().copied().map(Exact).collect();
        wrapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let wrapped = Vec::<Exact>::deserialize(d)?;
        Ok(wrapped.into_iter().map(|e| e.0).collect())
    }
}
