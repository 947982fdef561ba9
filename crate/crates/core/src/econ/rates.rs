//! Daily BTC/USD closing prices.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate};

use crate::error::{Error, Result};
use crate::money::{div_round_half_even_i, Rate};

/// UTC calendar date of an epoch timestamp.
pub fn utc_date(timestamp: i64) -> NaiveDate {
    DateTime::from_timestamp(timestamp, 0)
        .expect("timestamp within chrono range")
        .date_naive()
}

/// Map from UTC date to closing price. All prices are positive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RateTable {
    rates: BTreeMap<NaiveDate, Rate>,
}

impl RateTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one day. Rejects non-positive prices and repeated dates.
    pub fn insert(&mut self, date: NaiveDate, rate: Rate) -> Result<()> {
        if rate.0 == 0 {
            return Err(Error::Invariant(format!("non-positive closing price on {date}")));
        }
        if self.rates.insert(date, rate).is_some() {
            return Err(Error::Invariant(format!("duplicate rate for {date}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<Rate> {
        self.rates.get(&date).copied()
    }

    pub fn rate_on(&self, date: NaiveDate) -> Result<Rate> {
        self.get(date).ok_or(Error::MissingRate(date))
    }

    /// Rate for the UTC day containing `timestamp`.
    pub fn rate_at(&self, timestamp: i64) -> Result<Rate> {
        self.rate_on(utc_date(timestamp))
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, Rate)> + '_ {
        self.rates.iter().map(|(d, r)| (*d, *r))
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.rates.keys().next().copied()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.rates.keys().next_back().copied()
    }

    /// Days strictly between the first and last entry that have no rate.
    pub fn gaps(&self) -> Vec<NaiveDate> {
        let mut gaps = Vec::new();
        for (a, b) in self.rates.keys().zip(self.rates.keys().skip(1)) {
            let mut d = a.succ_opt().expect("date in range");
            while d < *b {
                gaps.push(d);
                d = d.succ_opt().expect("date in range");
            }
        }
        gaps
    }

    /// Copy with every interior gap filled by linear interpolation between
    /// the neighbouring known days. Days outside the covered range stay
    /// missing.
    pub fn interpolated(&self) -> RateTable {
        let mut out = self.clone();
        for ((d0, r0), (d1, r1)) in self.rates.iter().zip(self.rates.iter().skip(1)) {
            let span = (*d1 - *d0).num_days() as i128;
            let mut d = d0.succ_opt().expect("date in range");
            let mut k = 1i128;
            while d < *d1 {
                let delta = r1.0 as i128 - r0.0 as i128;
                let v = r0.0 as i128 + div_round_half_even_i(delta * k, span);
                out.rates.insert(d, Rate(v.max(1) as u64));
                d = d.succ_opt().expect("date in range");
                k += 1;
            }
        }
        out
    }

    /// CSV `date,close_usd`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("date,close_usd\n");
        for (d, r) in self.iter() {
            let cents = crate::money::div_round_half_even(r.0 as u128, 10_000);
            if cents * 10_000 == r.0 as u128 {
                s.push_str(&format!("{},{}.{:02}\n", d, cents / 100, cents % 100));
            } else {
                s.push_str(&format!("{d},{r}\n"));
            }
        }
        s
    }
}

/// Reads a `date,close_usd` CSV. Gaps are logged; use [`RateTable::gaps`]
/// to inspect them.
pub fn load_rates(path: impl AsRef<Path>) -> Result<RateTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_rates_from(file, path)
}

pub fn load_rates_from<R: Read>(reader: R, origin: impl AsRef<Path>) -> Result<RateTable> {
    let origin = origin.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|_| Error::Header {
            path: origin.into(),
            expected: "date,close_usd".into(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["date", "close_usd"] {
        return Err(Error::Header {
            path: origin.into(),
            expected: "date,close_usd".into(),
        });
    }
    let mut table = RateTable::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| Error::parse(origin, line, format!("bad date `{}`: {e}", &rec[0])))?;
        let price = rec[1].trim();
        let rate = if price.starts_with('-') {
            Rate(0)
        } else {
            Rate::parse(price).ok_or_else(|| Error::parse(origin, line, format!("bad price `{price}`")))?
        };
        table.insert(date, rate).map_err(|e| match e {
            Error::Invariant(msg) => Error::Invariant(format!("{}:{line}: {msg}", origin.display())),
            other => other,
        })?;
    }
    let gaps = table.gaps();
    if !gaps.is_empty() {
        log::warn!(
            "{}: {} day(s) without a closing price, first {}",
            origin.display(),
            gaps.len(),
            gaps[0]
        );
    }
    Ok(table)
}
