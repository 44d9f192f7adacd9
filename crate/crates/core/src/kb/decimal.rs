use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const SCALE: i64 = 10_000;

/// Fixed-point decimal with four fractional places, stored as a scaled integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Decimal(i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal literal `{0}`")]
pub struct DecimalParseError(pub String);

impl Decimal {
    pub const ZERO: Decimal = Decimal(0);

    pub fn from_scaled(raw: i64) -> Self {
        Decimal(raw)
    }

    pub fn from_int(v: i64) -> Self {
        Decimal(v * SCALE)
    }

    pub fn scaled(self) -> i64 {
        self.0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn abs(self) -> Self {
        Decimal(self.0.abs())
    }

    /// `numerator / denominator * 100`, rounded half away from zero to two places.
    pub fn percent_change(current: Decimal, previous: Decimal) -> Option<Decimal> {
        if previous.0 == 0 {
            return None;
        }
        // result in hundredths of a percent: (cur - prev) * 10000 / prev
        let num = (current.0 as i128 - previous.0 as i128) * 10_000;
        let den = previous.0 as i128;
        let hundredths = div_round_half_up(num, den);
        Some(Decimal((hundredths * 100) as i64))
    }

    /// Parses either `.` or `,` as the decimal separator.
    pub fn parse_localized(text: &str) -> Result<Self, DecimalParseError> {
        text.trim().replace(',', ".").parse()
    }

    /// Renders with a comma decimal separator and exactly two places.
    pub fn to_comma_string(self) -> String {
        self.to_fixed(2).replace('.', ",")
    }

    pub fn to_fixed(self, places: u32) -> String {
        let places = places.min(4);
        let drop = 10_i64.pow(4 - places);
        let rounded = div_round_half_up(self.0 as i128, drop as i128) as i64;
        let sign = if rounded < 0 { "-" } else { "" };
        let abs = rounded.unsigned_abs();
        if places == 0 {
            return format!("{sign}{abs}");
        }
        let unit = 10_u64.pow(places);
        format!("{sign}{}.{:0width$}", abs / unit, abs % unit, width = places as usize)
    }
}

fn div_round_half_up(num: i128, den: i128) -> i128 {
    let q = num / den;
    let r = num % den;
    if r.abs() * 2 >= den.abs() {
        if (num < 0) != (den < 0) {
            q - 1
        } else {
            q + 1
        }
    } else {
        q
    }
}

impl FromStr for Decimal {
    type Err = DecimalParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DecimalParseError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        if frac_part.len() > 4 && frac_part[4..].chars().any(|c| c != '0') {
            return Err(err());
        }
        let int: i64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| err())? };
        let mut frac = frac_part.chars().take(4).collect::<String>();
        while frac.len() < 4 {
            frac.push('0');
        }
        let frac: i64 = frac.parse().map_err(|_| err())?;
        let raw = int.checked_mul(SCALE).and_then(|v| v.checked_add(frac)).ok_or_else(err)?;
        Ok(Decimal(if neg { -raw } else { raw }))
    }
}

impl fmt::Display for Decimal {
    /// Shortest form: trailing fractional zeros are dropped.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.to_fixed(4);
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
        f.write_str(s)
    }
}

impl std::ops::Add for Decimal {
    type Output = Decimal;
    fn add(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Decimal {
    type Output = Decimal;
    fn sub(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Decimal {
    fn sum<I: Iterator<Item = Decimal>>(iter: I) -> Decimal {
        iter.fold(Decimal::ZERO, |a, b| a + b)
    }
}

impl From<i64> for Decimal {
    fn from(v: i64) -> Self {
        Decimal::from_int(v)
    }
}

impl From<Decimal> for String {
    fn from(d: Decimal) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for Decimal {
    type Error = DecimalParseError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
