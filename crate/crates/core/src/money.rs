//! Single-currency money in integer cents.
//!
//! Arithmetic never touches floating point. Division rounds half-up (half
//! away from zero), which is also how every report figure is displayed.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An amount of money in cents. Signed: ledger amounts use `+` for revenue
/// and `-` for cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    pub const fn from_euros(euros: i64) -> Self {
        Money(euros * 100)
    }

    /// Parses a decimal amount such as `"5346.96"`, `"8"` or `"-7.5"`.
    /// More than two fractional digits are rejected rather than rounded.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let (negative, digits) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (whole, frac) = match digits.split_once('.') {
            Some((w, f)) => (w, f),
            None => (digits, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return None;
        }
        if !whole.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 2
        {
            return None;
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
        let frac: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().ok()? * 10,
            _ => frac.parse().ok()?,
        };
        let cents = whole.checked_mul(100)?.checked_add(frac)?;
        Some(Money(if negative { -cents } else { cents }))
    }

    /// Converts a floating amount, rounding to the nearest cent.
    pub fn from_f64(value: f64) -> Self {
        Money((value * 100.0).round() as i64)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn abs(self) -> Self {
        Money(self.0.abs())
    }

    /// Divides by a positive integer count, rounding half-up to the cent.
    pub fn div_round(self, divisor: u64) -> Option<Self> {
        if divisor == 0 {
            return None;
        }
        Some(Money(div_half_up(self.0 as i128, divisor as i128) as i64))
    }

    /// Returns `self * num / den`, rounded half-up to the cent.
    pub fn scale_round(self, num: i64, den: i64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        Some(Money(div_half_up(self.0 as i128 * num as i128, den as i128) as i64))
    }
}

/// Integer division rounding half away from zero. `den` must be positive.
pub(crate) fn div_half_up(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    if num >= 0 {
        (2 * num + den) / (2 * den)
    } else {
        -((-2 * num + den) / (2 * den))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Mul<i64> for Money {
    type Output = Money;
    fn mul(self, rhs: i64) -> Money {
        Money(self.0 * rhs)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

// JSON carries money as a decimal number of euros (`8.0`, `5346.96`) or as a
// decimal string. Serialization emits a string so cents survive exactly.
impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(euros) => Ok(Money::from_euros(euros)),
            Repr::Float(value) => Ok(Money::from_f64(value)),
            Repr::Text(text) => Money::parse(&text)
                .ok_or_else(|| serde::de::Error::custom(format!("invalid amount {text:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!(Money::parse("5346.96"), Some(Money::from_cents(534_696)));
        assert_eq!(Money::parse("8"), Some(Money::from_euros(8)));
        assert_eq!(Money::parse("9.3"), Some(Money::from_cents(930)));
        assert_eq!(Money::parse("-7.00"), Some(Money::from_cents(-700)));
        assert_eq!(Money::parse("1.234"), None);
        assert_eq!(Money::parse("abc"), None);
        assert_eq!(Money::from_cents(-5).to_string(), "-0.05");
        assert_eq!(Money::from_euros(34_901).to_string(), "34901.00");
    }

    #[test]
    fn half_up_division() {
        assert_eq!(Money::from_cents(534_696).div_round(96), Some(Money::from_cents(5570)));
        assert_eq!(Money::from_cents(238_430).div_round(221), Some(Money::from_cents(1079)));
        assert_eq!(Money::from_cents(5).div_round(2), Some(Money::from_cents(3)));
        assert_eq!(Money::from_cents(-5).div_round(2), Some(Money::from_cents(-3)));
        assert_eq!(Money::from_cents(1).div_round(0), None);
    }

    #[test]
    fn serde_accepts_numbers_and_strings() {
        let m: Money = serde_json::from_str("8.0").unwrap();
        assert_eq!(m, Money::from_euros(8));
        let m: Money = serde_json::from_str("19185").unwrap();
        assert_eq!(m, Money::from_euros(19_185));
        let m: Money = serde_json::from_str("\"10.79\"").unwrap();
        assert_eq!(m.cents(), 1079);
        assert_eq!(serde_json::to_string(&m).unwrap(), "\"10.79\"");
    }
}
