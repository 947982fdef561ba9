//! Fixed-point money types.
//!
//! Ledger values stay in integer satoshi. Closing rates are held in
//! micro-dollars per BTC, so `sat * rate` is an exact amount in units of
//! 10^-14 USD ([`UsdExact`]). Rounding to cents only happens at record and
//! display boundaries, always half-to-even.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

pub const SAT_PER_BTC: u64 = 100_000_000;
/// Rates are stored with six fractional digits.
pub const RATE_SCALE: u64 = 1_000_000;
/// `UsdExact` units per cent: 10^14 / 10^2.
const EXACT_PER_CENT: u128 = 1_000_000_000_000;

/// Integer division rounding half to even. `den` must be non-zero.
pub fn div_round_half_even(num: u128, den: u128) -> u128 {
    let q = num / den;
    let r = num % den;
    let twice = r * 2;
    if twice > den || (twice == den && q % 2 == 1) {
        q + 1
    } else {
        q
    }
}

/// Signed variant of [`div_round_half_even`] for `den > 0`.
pub fn div_round_half_even_i(num: i128, den: i128) -> i128 {
    let mag = div_round_half_even(num.unsigned_abs(), den as u128) as i128;
    if num < 0 {
        -mag
    } else {
        mag
    }
}

/// Closing price in micro-USD per BTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Rate(pub u64);

impl Rate {
    /// Parses a plain decimal like `"432.17"`. Digits beyond the sixth
    /// fractional place are rounded half-even.
    pub fn parse(text: &str) -> Option<Rate> {
        let text = text.trim();
        let (int_part, frac_part) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let int_val: u128 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
        let mut scaled = int_val.checked_mul(RATE_SCALE as u128)?;
        if !frac_part.is_empty() {
            let digits = frac_part.len() as u32;
            let frac_val: u128 = frac_part.parse().ok()?;
            let frac_scaled = if digits <= 6 {
                frac_val * 10u128.pow(6 - digits)
            } else {
                div_round_half_even(frac_val, 10u128.checked_pow(digits - 6)?)
            };
            scaled = scaled.checked_add(frac_scaled)?;
        }
        u64::try_from(scaled).ok().map(Rate)
    }

    /// Exact USD value of `sat` at this rate.
    pub fn value_of(self, sat: u64) -> UsdExact {
        UsdExact(sat as u128 * self.0 as u128)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / RATE_SCALE as f64
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / RATE_SCALE, self.0 % RATE_SCALE)
    }
}

/// Exact dollar amount in units of 10^-14 USD.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UsdExact(pub u128);

impl UsdExact {
    pub fn to_cents(self) -> Cents {
        Cents(div_round_half_even(self.0, EXACT_PER_CENT) as u64)
    }
}

impl Add for UsdExact {
    type Output = UsdExact;
    fn add(self, rhs: UsdExact) -> UsdExact {
        UsdExact(self.0 + rhs.0)
    }
}

impl AddAssign for UsdExact {
    fn add_assign(&mut self, rhs: UsdExact) {
        self.0 += rhs.0;
    }
}

impl Sum for UsdExact {
    fn sum<I: Iterator<Item = UsdExact>>(iter: I) -> UsdExact {
        iter.fold(UsdExact::default(), Add::add)
    }
}

/// Whole US cents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cents(pub u64);

impl Cents {
    pub fn from_dollars(dollars: u64) -> Cents {
        Cents(dollars * 100)
    }

    /// Whole dollars, rounded half-even.
    pub fn whole_dollars(self) -> u64 {
        div_round_half_even(self.0 as u128, 100) as u64
    }

    pub fn as_dollars_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// `1234.56` style rendering.
    pub fn to_decimal_string(self) -> String {
        format!("{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        iter.fold(Cents::default(), Add::add)
    }
}

/// BTC with two decimals, rounded half-even from satoshi.
pub fn btc_2dp(sat: u64) -> String {
    let centi = div_round_half_even(sat as u128, (SAT_PER_BTC / 100) as u128) as u64;
    format!("{}.{:02}", centi / 100, centi % 100)
}

/// BTC with all eight decimals.
pub fn btc_8dp(sat: u64) -> String {
    format!("{}.{:08}", sat / SAT_PER_BTC, sat % SAT_PER_BTC)
}
