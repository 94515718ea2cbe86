//! Exact rational arithmetic helpers.
//!
//! All opinions, controls, radii and weights are [`Rational`]s. `BigRational`
//! keeps itself in lowest terms with a positive denominator after every
//! operation, so equality and ordering are exact.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericError {
    #[error("malformed number {text:?}: unexpected {found:?} at position {position}")]
    UnexpectedChar {
        text: String,
        position: usize,
        found: char,
    },
    #[error("malformed number {text:?}: {reason}")]
    Malformed { text: String, reason: &'static str },
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

/// `numer / denom` as a rational. Panics on a zero denominator.
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

pub fn pow10(exp: u32) -> BigInt {
    num_traits::pow(BigInt::from(10u32), exp as usize)
}

/// Parses `[+-]digits[.digits]` (a leading `.5` or trailing `5.` is allowed)
/// into the exact rational it denotes.
pub fn parse_decimal(text: &str) -> Result<Rational, NumericError> {
    let (mantissa, _) = split_mantissa(text, false)?;
    Ok(mantissa)
}

/// Like [`parse_decimal`], but also accepts an exponent suffix (`1e-05`,
/// `4.5E+1`) as written by MILP solvers.
pub fn parse_scientific(text: &str) -> Result<Rational, NumericError> {
    let (mantissa, rest) = split_mantissa(text, true)?;
    let Some(exp_text) = rest else {
        return Ok(mantissa);
    };
    let offset = text.len() - exp_text.len();
    let mut chars = exp_text.char_indices().peekable();
    let mut negative = false;
    if let Some(&(_, c)) = chars.peek() {
        if c == '+' || c == '-' {
            negative = c == '-';
            chars.next();
        }
    }
    let mut exp: u32 = 0;
    let mut any = false;
    for (pos, c) in chars {
        let d = c.to_digit(10).ok_or_else(|| NumericError::UnexpectedChar {
            text: text.to_string(),
            position: offset + pos,
            found: c,
        })?;
        exp = exp
            .checked_mul(10)
            .and_then(|e| e.checked_add(d))
            .filter(|&e| e <= 10_000)
            .ok_or_else(|| NumericError::Malformed {
                text: text.to_string(),
                reason: "exponent out of range",
            })?;
        any = true;
    }
    if !any {
        return Err(NumericError::Malformed {
            text: text.to_string(),
            reason: "empty exponent",
        });
    }
    let scale = Rational::from_integer(pow10(exp));
    Ok(if negative {
        mantissa / scale
    } else {
        mantissa * scale
    })
}

fn split_mantissa(text: &str, allow_exponent: bool) -> Result<(Rational, Option<&str>), NumericError> {
    let mut negative = false;
    let mut digits = BigInt::zero();
    let mut frac_len: u32 = 0;
    let mut seen_digit = false;
    let mut seen_point = false;
    let mut rest = None;
    for (pos, c) in text.char_indices() {
        match c {
            '+' | '-' if pos == 0 => negative = c == '-',
            '0'..='9' => {
                digits = digits * 10u32 + c.to_digit(10).unwrap();
                if seen_point {
                    frac_len += 1;
                }
                seen_digit = true;
            }
            '.' if !seen_point => seen_point = true,
            'e' | 'E' if allow_exponent && seen_digit => {
                rest = Some(&text[pos + 1..]);
                break;
            }
            _ => {
                return Err(NumericError::UnexpectedChar {
                    text: text.to_string(),
                    position: pos,
                    found: c,
                })
            }
        }
    }
    if !seen_digit {
        return Err(NumericError::Malformed {
            text: text.to_string(),
            reason: "no digits",
        });
    }
    if negative {
        digits = -digits;
    }
    Ok((Rational::new(digits, pow10(frac_len)), rest))
}

/// Parses either `p/q` or a decimal string.
pub fn parse_rational(text: &str) -> Result<Rational, NumericError> {
    let text = text.trim();
    match text.split_once('/') {
        Some((p, q)) => {
            let numer = parse_integer(p, text)?;
            let denom = parse_integer(q, text)?;
            if denom.is_zero() {
                return Err(NumericError::ZeroDenominator(text.to_string()));
            }
            Ok(Rational::new(numer, denom))
        }
        None => parse_decimal(text),
    }
}

fn parse_integer(part: &str, whole: &str) -> Result<BigInt, NumericError> {
    let value = parse_decimal(part.trim()).map_err(|_| NumericError::Malformed {
        text: whole.to_string(),
        reason: "expected integer numerator and denominator",
    })?;
    if !value.is_integer() || part.contains('.') {
        return Err(NumericError::Malformed {
            text: whole.to_string(),
            reason: "expected integer numerator and denominator",
        });
    }
    Ok(value.to_integer())
}

/// Decimal expansion truncated toward zero to exactly `digits` fractional
/// digits.
pub fn to_decimal(value: &Rational, digits: usize) -> String {
    let negative = value.is_negative();
    let abs = value.abs();
    let scaled = (abs.numer() * pow10(digits as u32)) / abs.denom();
    let mut body = scaled.to_str_radix(10);
    if body.len() <= digits {
        body = format!("{}{}", "0".repeat(digits + 1 - body.len()), body);
    }
    let split = body.len() - digits;
    let sign = if negative && !scaled.is_zero() { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{body}")
    } else {
        format!("{sign}{}.{}", &body[..split], &body[split..])
    }
}

/// The exact finite decimal expansion of `value`, if its denominator has no
/// prime factors other than 2 and 5. Trailing zeros are dropped.
pub fn to_exact_decimal(value: &Rational) -> Option<String> {
    let (twos, fives, rest) = factor_2_5(value.denom());
    if !rest.is_one() {
        return None;
    }
    let digits = twos.max(fives) as usize;
    let text = to_decimal(value, digits);
    if digits == 0 {
        return Some(text);
    }
    let trimmed = text.trim_end_matches('0').trim_end_matches('.');
    Some(if trimmed == "-0" { "0".into() } else { trimmed.to_string() })
}

fn factor_2_5(denom: &BigInt) -> (u32, u32, BigInt) {
    let mut rest = denom.clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut twos = 0;
    let mut fives = 0;
    while !rest.is_zero() && rest.is_multiple_of(&two) {
        rest /= &two;
        twos += 1;
    }
    while !rest.is_zero() && rest.is_multiple_of(&five) {
        rest /= &five;
        fives += 1;
    }
    (twos, fives, rest)
}

/// The part of the denominator coprime to 10; multiplying a value by it
/// yields a terminating decimal.
pub fn non_decimal_factor(value: &Rational) -> BigInt {
    factor_2_5(value.denom()).2
}

/// `p/q` form; integers are written `p/1`.
pub fn format_ratio(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Rounds a float to `significant` significant decimal digits and returns
/// that decimal exactly. Used only when drawing random instance data.
pub fn quantize_significant(value: f64, significant: usize) -> Rational {
    assert!(value.is_finite(), "cannot quantize {value}");
    assert!(significant >= 1);
    if value == 0.0 {
        return Rational::zero();
    }
    let text = format!("{:.*e}", significant - 1, value);
    parse_scientific(&text).expect("float formatting yields a valid decimal")
}

/// Approximate float value, for plotting coordinates only.
pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or_else(|| {
        // Fall back through a truncated decimal for huge numerators.
        to_decimal(value, 20).parse().unwrap_or(f64::NAN)
    })
}

/// The rational with the smallest denominator in `[lo, hi]`, for
/// `0 <= lo <= hi`.
pub fn simplest_between(lo: &Rational, hi: &Rational) -> Rational {
    assert!(!lo.is_negative() && lo <= hi, "need 0 <= lo <= hi");
    let floor = lo.floor();
    if floor == *lo {
        return lo.clone();
    }
    let next = &floor + Rational::one();
    if next <= *hi {
        return next;
    }
    let inner = simplest_between(&(hi - &floor).recip(), &(lo - &floor).recip());
    floor + inner.recip()
}

/// Replaces `value` by the simplest rational within `tolerance`, clipped to
/// non-negative values.
pub fn snap(value: &Rational, tolerance: &Rational) -> Rational {
    let lo = (value - tolerance).max(Rational::zero());
    let hi = (value + tolerance).max(Rational::zero());
    simplest_between(&lo, &hi)
}

pub fn is_unit(value: &Rational) -> bool {
    !value.is_negative() && *value <= Rational::one()
}

/// Displays a rational as a truncated decimal or as `p/q`.
#[derive(Debug, Clone, Copy)]
pub enum DecimalStyle {
    Truncated(usize),
    Exact,
}

pub struct Formatted<'a>(pub &'a Rational, pub DecimalStyle);

impl fmt::Display for Formatted<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.1 {
            DecimalStyle::Truncated(d) => f.write_str(&to_decimal(self.0, d)),
            DecimalStyle::Exact => f.write_str(&format_ratio(self.0)),
        }
    }
}

/// Serde adapter writing rationals as `"p/q"` and reading `"p/q"` or decimal
/// strings.
pub mod serde_ratio {
    use super::*;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ratio(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(D::Error::custom)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(values.iter().map(format_ratio))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
            let texts = Vec::<String>::deserialize(d)?;
            texts
                .iter()
                .map(|t| parse_rational(t).map_err(D::Error::custom))
                .collect()
        }
    }
}
