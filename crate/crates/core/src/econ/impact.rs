use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::Serialize;

use super::rates::{utc_date, RateTable};
use crate::campaign::FamilyCampaign;
use crate::error::{Error, Result};
use crate::flows::KeyAddress;
use crate::ledger::{AddrId, LedgerStore, Role};
use crate::money::{btc_2dp, Cents};

/// One output received by a payment address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PaymentRecord {
    pub family: String,
    pub address: String,
    pub txid: String,
    pub timestamp: i64,
    pub amount_sat: u64,
    /// Valued at the receipt day's closing price, half-even to cents.
    pub amount_usd: Cents,
}

/// Payment addresses of one family and everything they received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentSet {
    pub family: String,
    /// Time-filtered expanded addresses minus expanded key addresses.
    pub addresses: Vec<AddrId>,
    /// Ordered by (timestamp, txid, address).
    pub records: Vec<PaymentRecord>,
}

/// Collects every payment to a family's payment addresses.
///
/// Expanded key addresses are collectors: funds they receive were already
/// counted when a payment address received them, so they are left out.
/// Explicit change (an address paying itself) is not a payment.
pub fn payment_set(
    campaign: &FamilyCampaign,
    keys: &[KeyAddress],
    store: &LedgerStore,
    rates: &RateTable,
) -> Result<PaymentSet> {
    let collectors: BTreeSet<AddrId> = keys.iter().filter(|k| k.was_expanded).map(|k| k.address).collect();
    let addresses: Vec<AddrId> = campaign
        .expanded_tf
        .iter()
        .copied()
        .filter(|a| !collectors.contains(a))
        .collect();
    let mut records = Vec::new();
    let mut missing: Option<NaiveDate> = None;
    for &a in &addresses {
        for &(tx, role) in store.occurrences(a) {
            if role != Role::Output || store.inputs(tx).iter().any(|s| s.addr == a) {
                continue;
            }
            let t = store.tx(tx);
            for out in store.outputs(tx).iter().filter(|s| s.addr == a && s.value > 0) {
                let date = utc_date(t.timestamp);
                let Some(rate) = rates.get(date) else {
                    missing = Some(missing.map_or(date, |m| m.min(date)));
                    continue;
                };
                records.push(PaymentRecord {
                    family: campaign.family.clone(),
                    address: store.address(a).to_string(),
                    txid: t.txid_hex(),
                    timestamp: t.timestamp,
                    amount_sat: out.value,
                    amount_usd: rate.value_of(out.value).to_cents(),
                });
            }
        }
    }
    if let Some(d) = missing {
        return Err(Error::MissingRate(d));
    }
    records.sort_by(|x, y| (x.timestamp, &x.txid, &x.address).cmp(&(y.timestamp, &y.txid, &y.address)));
    Ok(PaymentSet {
        family: campaign.family.clone(),
        addresses,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FamilyImpact {
    pub family: String,
    /// Number of payment addresses.
    pub addresses: usize,
    pub payments: usize,
    pub total_sat: u64,
    pub total_usd: Cents,
    /// No payment was received.
    pub empty: bool,
}

impl FamilyImpact {
    pub fn btc_display(&self) -> String {
        btc_2dp(self.total_sat)
    }
}

pub fn family_impact(set: &PaymentSet) -> FamilyImpact {
    FamilyImpact {
        family: set.family.clone(),
        addresses: set.addresses.len(),
        payments: set.records.len(),
        total_sat: set.records.iter().map(|r| r.amount_sat).sum(),
        total_usd: set.records.iter().map(|r| r.amount_usd).sum(),
        empty: set.records.is_empty(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanPayment {
    pub n: usize,
    pub mean_usd: f64,
    /// Sample standard deviation over √n; absent for a single payment.
    pub std_error: Option<f64>,
}

/// Mean payment in USD of one family with its standard error.
pub fn mean_payment(records: &[PaymentRecord], family: &str) -> Result<MeanPayment> {
    let xs: Vec<f64> = records
        .iter()
        .filter(|r| r.family == family)
        .map(|r| r.amount_usd.as_dollars_f64())
        .collect();
    let n = xs.len();
    if n == 0 {
        return Err(Error::Empty(format!("family {family} has no payment records")));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std_error = (n > 1).then(|| {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / (n as f64).sqrt()
    });
    Ok(MeanPayment {
        n,
        mean_usd: mean,
        std_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Day,
    Week,
    #[default]
    Month,
}

impl Bucket {
    /// Start of the bucket holding `date`. Weeks start on Monday.
    pub fn start_of(self, date: NaiveDate) -> NaiveDate {
        match self {
            Bucket::Day => date,
            Bucket::Week => date - Days::new(date.weekday().num_days_from_monday() as u64),
            Bucket::Month => date.with_day(1).expect("day 1 exists"),
        }
    }

    pub fn next(self, start: NaiveDate) -> NaiveDate {
        match self {
            Bucket::Day => start + Days::new(1),
            Bucket::Week => start + Days::new(7),
            Bucket::Month => start + Months::new(1),
        }
    }
}

impl FromStr for Bucket {
    type Err = Error;
    fn from_str(s: &str) -> Result<Bucket> {
        match s {
            "day" => Ok(Bucket::Day),
            "week" => Ok(Bucket::Week),
            "month" => Ok(Bucket::Month),
            other => Err(Error::Config(format!("bucket `{other}`, expected day, week or month"))),
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::Day => "day",
            Bucket::Week => "week",
            Bucket::Month => "month",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeriesPoint {
    pub bucket_start: NaiveDate,
    pub period_usd: Cents,
    pub cumulative_usd: Cents,
}

/// Per-bucket and running USD totals from the first to the last bucket
/// with a payment. Empty buckets in between carry a zero period value.
pub fn cumulative_series(records: &[PaymentRecord], family: &str, bucket: Bucket) -> Vec<SeriesPoint> {
    let mut per: Vec<(NaiveDate, Cents)> = records
        .iter()
        .filter(|r| r.family == family)
        .map(|r| (bucket.start_of(utc_date(r.timestamp)), r.amount_usd))
        .collect();
    if per.is_empty() {
        return Vec::new();
    }
    per.sort_by_key(|&(d, _)| d);
    let last = per.last().expect("non-empty").0;
    let mut out = Vec::new();
    let mut cursor = per[0].0;
    let mut running = Cents::default();
    let mut it = per.into_iter().peekable();
    while cursor <= last {
        let mut period = Cents::default();
        while let Some(&(d, v)) = it.peek() {
            if d != cursor {
                break;
            }
            period += v;
            it.next();
        }
        running += period;
        out.push(SeriesPoint {
            bucket_start: cursor,
            period_usd: period,
            cumulative_usd: running,
        });
        cursor = bucket.next(cursor);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketShare {
    pub family: String,
    pub addresses: usize,
    pub total_sat: u64,
    pub total_usd: Cents,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactReport {
    /// Sorted by USD descending, then family name.
    pub families: Vec<MarketShare>,
    pub total_sat: u64,
    pub total_usd: Cents,
}

impl ImpactReport {
    /// Combined share of the `k` largest families.
    pub fn top_share(&self, k: usize) -> f64 {
        self.families.iter().take(k).map(|f| f.share).sum()
    }

    pub fn share_sum(&self) -> f64 {
        self.families.iter().map(|f| f.share).sum()
    }

    /// Summary JSON: totals and per-family shares, money in display units
    /// plus exact integers.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "total_btc": btc_2dp(self.total_sat),
            "total_sat": self.total_sat,
            "total_usd": self.total_usd.whole_dollars(),
            "total_usd_cents": self.total_usd.0,
            "families": self.families.iter().map(|f| serde_json::json!({
                "family": f.family,
                "addresses": f.addresses,
                "btc": btc_2dp(f.total_sat),
                "sat": f.total_sat,
                "usd": f.total_usd.whole_dollars(),
                "usd_cents": f.total_usd.0,
                "share": f.share,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Market totals and each family's share of the USD total. With a zero
/// total every share is zero.
pub fn market_summary(impacts: &[FamilyImpact]) -> Result<ImpactReport> {
    if impacts.is_empty() {
        return Err(Error::Empty("market summary needs at least one family".into()));
    }
    let total_sat = impacts.iter().map(|f| f.total_sat).sum();
    let total_usd: Cents = impacts.iter().map(|f| f.total_usd).sum();
    let mut families: Vec<MarketShare> = impacts
        .iter()
        .map(|f| MarketShare {
            family: f.family.clone(),
            addresses: f.addresses,
            total_sat: f.total_sat,
            total_usd: f.total_usd,
            share: if total_usd.0 == 0 {
                0.0
            } else {
                f.total_usd.0 as f64 / total_usd.0 as f64
            },
        })
        .collect();
    families.sort_by(|a, b| b.total_usd.cmp(&a.total_usd).then(a.family.cmp(&b.family)));
    Ok(ImpactReport {
        families,
        total_sat,
        total_usd,
    })
}

/// CSV `family,addresses,btc,usd`: BTC to two decimals, whole dollars.
pub fn write_impact_table<W: Write>(report: &ImpactReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "addresses", "btc", "usd"])?;
    for f in &report.families {
        w.write_record([
            f.family.clone(),
            f.addresses.to_string(),
            btc_2dp(f.total_sat),
            f.total_usd.whole_dollars().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// CSV `family,bucket_start,period_usd,cumulative_usd` in whole dollars.
pub fn write_series<W: Write>(series: &[(String, Vec<SeriesPoint>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "bucket_start", "period_usd", "cumulative_usd"])?;
    for (family, points) in series {
        for p in points {
            w.write_record([
                family.clone(),
                p.bucket_start.to_string(),
                p.period_usd.whole_dollars().to_string(),
                p.cumulative_usd.whole_dollars().to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// CSV `family,payments,mean_usd,std_error_usd`; the error column is empty
/// for single-payment families.
pub fn write_means<W: Write>(means: &[(String, MeanPayment)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "payments", "mean_usd", "std_error_usd"])?;
    for (family, m) in means {
        w.write_record([
            family.clone(),
            m.n.to_string(),
            format!("{:.2}", m.mean_usd),
            m.std_error.map(|e| format!("{e:.2}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// CSV `family,address,txid,timestamp,amount_sat,amount_usd`.
pub fn write_payments<W: Write>(sets: &[PaymentSet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "address", "txid", "timestamp", "amount_sat", "amount_usd"])?;
    for set in sets {
        for r in &set.records {
            w.write_record([
                r.family.clone(),
                r.address.clone(),
                r.txid.clone(),
                r.timestamp.to_string(),
                r.amount_sat.to_string(),
                r.amount_usd.to_decimal_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
