//! Family seed sets, cluster expansion and campaign time filters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::ledger::{AddrId, LedgerStore};

/// A calendar month in UTC, written `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<YearMonth> {
        NaiveDate::from_ymd_opt(year, month, 1).map(|_| YearMonth { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("validated on construction")
    }

    /// Epoch seconds of the first UTC instant of the month.
    pub fn first_instant(self) -> i64 {
        Utc.from_utc_datetime(&self.first_day().and_hms_opt(0, 0, 0).expect("midnight"))
            .timestamp()
    }

    pub fn of_timestamp(ts: i64) -> YearMonth {
        use chrono::Datelike;
        let d = crate::econ::rates::utc_date(ts);
        YearMonth {
            year: d.year(),
            month: d.month(),
        }
    }

    pub fn add_months(self, n: i32) -> YearMonth {
        let idx = self.year * 12 + self.month as i32 - 1 + n;
        YearMonth {
            year: idx.div_euclid(12),
            month: idx.rem_euclid(12) as u32 + 1,
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<YearMonth> {
        let bad = || Error::Config(format!("`{s}` is not a YYYY-MM month"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).ok_or_else(bad)
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;
    fn try_from(s: String) -> Result<YearMonth> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(ym: YearMonth) -> String {
        ym.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedRecord {
    pub family: String,
    pub address: String,
    pub source: String,
}

/// Seeds grouped by family, deduplicated per (family, address).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedBook {
    families: BTreeMap<String, BTreeSet<String>>,
}

impl SeedBook {
    pub fn from_records(records: impl IntoIterator<Item = SeedRecord>) -> SeedBook {
        let mut families: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in records {
            families.entry(r.family).or_default().insert(r.address);
        }
        SeedBook { families }
    }

    pub fn families(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.families.iter().map(|(f, s)| (f.as_str(), s))
    }

    pub fn family(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.families.get(name)
    }

    pub fn family_count(&self) -> usize {
        self.families.len()
    }

    pub fn seed_count(&self) -> usize {
        self.families.values().map(BTreeSet::len).sum()
    }
}

pub fn load_seeds(path: impl AsRef<Path>) -> Result<SeedBook> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_seeds_from(file, path)
}

/// Reads `family,address,source` CSV.
pub fn load_seeds_from<R: Read>(reader: R, origin: impl AsRef<Path>) -> Result<SeedBook> {
    const HEADER: [&str; 3] = ["family", "address", "source"];
    let origin = origin.as_ref();
    let header_err = || Error::Header {
        path: origin.into(),
        expected: HEADER.join(","),
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|_| header_err())?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(header_err());
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if rec[0].is_empty() {
            return Err(Error::parse(origin, line, "empty family"));
        }
        if rec[1].is_empty() {
            return Err(Error::parse(origin, line, "empty address"));
        }
        records.push(SeedRecord {
            family: rec[0].to_string(),
            address: rec[1].to_string(),
            source: rec[2].to_string(),
        });
    }
    Ok(SeedBook::from_records(records))
}

/// One family's seeds and the address sets derived from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyCampaign {
    pub family: String,
    pub start: Option<YearMonth>,
    /// Seeds present in the ledger, ascending.
    pub seeds: Vec<AddrId>,
    /// Seeds never observed in the ledger, sorted.
    pub dropped: Vec<String>,
    /// Union of the clusters containing a surviving seed, ascending.
    pub expanded: Vec<AddrId>,
    /// Expanded addresses that pass the time filter, ascending.
    pub expanded_tf: Vec<AddrId>,
    pub clusters_touched: usize,
    pub time_filtered: bool,
}

impl FamilyCampaign {
    /// True when no seed survived the ledger match.
    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn input_seed_count(&self) -> usize {
        self.seeds.len() + self.dropped.len()
    }

    pub fn in_expanded(&self, a: AddrId) -> bool {
        self.expanded.binary_search(&a).is_ok()
    }

    pub fn in_expanded_tf(&self, a: AddrId) -> bool {
        self.expanded_tf.binary_search(&a).is_ok()
    }

    pub fn is_seed(&self, a: AddrId) -> bool {
        self.seeds.binary_search(&a).is_ok()
    }
}

/// Links a family's seeds to their clusters. Seeds absent from the ledger
/// are dropped and listed in `dropped`. The result is unfiltered:
/// `expanded_tf == expanded`.
pub fn expand<'a>(
    family: &str,
    seeds: impl IntoIterator<Item = &'a String>,
    partition: &Partition,
    store: &LedgerStore,
) -> FamilyCampaign {
    let mut surviving = BTreeSet::new();
    let mut dropped = BTreeSet::new();
    for s in seeds {
        match store.addr_id(s) {
            Some(id) => {
                surviving.insert(id);
            }
            None => {
                dropped.insert(s.clone());
            }
        }
    }
    let clusters: BTreeSet<_> = surviving.iter().map(|&a| partition.cluster_of(a)).collect();
    let mut expanded: Vec<AddrId> = clusters
        .iter()
        .flat_map(|&c| partition.members(c).iter().copied())
        .collect();
    expanded.sort_unstable();
    if surviving.is_empty() {
        log::warn!("family {family}: no seed address occurs in the ledger");
    }
    if !dropped.is_empty() {
        log::info!("family {family}: dropped {} seed(s) never seen on-chain", dropped.len());
    }
    FamilyCampaign {
        family: family.to_string(),
        start: None,
        seeds: surviving.into_iter().collect(),
        dropped: dropped.into_iter().collect(),
        expanded_tf: expanded.clone(),
        expanded,
        clusters_touched: clusters.len(),
        time_filtered: false,
    }
}

/// Keeps expanded addresses first seen at or after the start of
/// `start` (UTC). Seeds are always kept. Without a start month the filter
/// is skipped and a warning logged.
pub fn time_filter(mut campaign: FamilyCampaign, start: Option<YearMonth>, store: &LedgerStore) -> FamilyCampaign {
    campaign.start = start;
    let Some(month) = start else {
        log::warn!("family {}: no campaign start month, time filter skipped", campaign.family);
        campaign.expanded_tf = campaign.expanded.clone();
        campaign.time_filtered = false;
        return campaign;
    };
    let cutoff = month.first_instant();
    campaign.expanded_tf = campaign
        .expanded
        .iter()
        .copied()
        .filter(|&a| campaign.is_seed(a) || store.first_seen_id(a) >= cutoff)
        .collect();
    campaign.time_filtered = true;
    campaign
}

/// CSV `family,seed_addr,clusters,exp_addr,exp_addr_tf`, ordered by
/// `exp_addr_tf` descending then family.
pub fn write_dataset_summary<W: Write>(campaigns: &[FamilyCampaign], out: W) -> Result<()> {
    let mut rows: Vec<&FamilyCampaign> = campaigns.iter().collect();
    rows.sort_by(|a, b| b.expanded_tf.len().cmp(&a.expanded_tf.len()).then(a.family.cmp(&b.family)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "seed_addr", "clusters", "exp_addr", "exp_addr_tf"])?;
    for c in rows {
        w.write_record([
            c.family.clone(),
            c.seeds.len().to_string(),
            c.clusters_touched.to_string(),
            c.expanded.len().to_string(),
            c.expanded_tf.len().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// CSV `family,seed,reason` listing seeds that never appear on-chain.
pub fn write_dropped_seeds<W: Write>(campaigns: &[FamilyCampaign], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "seed", "reason"])?;
    for c in campaigns {
        for s in &c.dropped {
            w.write_record([c.family.as_str(), s.as_str(), "not in ledger"])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
