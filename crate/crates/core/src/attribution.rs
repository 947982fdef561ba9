//! Attribution tags and their propagation from addresses to clusters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterId, Partition};
use crate::error::{Error, Result};
use crate::ledger::LedgerStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Exchange,
    Gambling,
    Mixer,
    Other,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Exchange, Category::Gambling, Category::Mixer, Category::Other];

    /// Parses a category name; `None` for anything outside the vocabulary.
    pub fn parse(text: &str) -> Option<Category> {
        match text.trim().to_ascii_lowercase().as_str() {
            "exchange" => Some(Category::Exchange),
            "gambling" => Some(Category::Gambling),
            "mixer" => Some(Category::Mixer),
            "other" => Some(Category::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Exchange => "exchange",
            Category::Gambling => "gambling",
            Category::Mixer => "mixer",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub address: String,
    pub label: String,
    pub category: Category,
    pub source: String,
}

/// Deduplicated tags plus any warnings raised while loading them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagSet {
    pub tags: Vec<Tag>,
    pub warnings: Vec<String>,
}

impl TagSet {
    /// Builds a set from tags, dropping repeated (address, label) pairs.
    /// The first occurrence wins.
    pub fn from_tags(tags: impl IntoIterator<Item = Tag>) -> TagSet {
        let mut seen = BTreeSet::new();
        let tags = tags
            .into_iter()
            .filter(|t| seen.insert((t.address.clone(), t.label.clone())))
            .collect();
        TagSet {
            tags,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

const TAG_HEADER: [&str; 4] = ["address", "label", "category", "source"];

pub fn load_tags(path: impl AsRef<Path>) -> Result<TagSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_tags_from(file, path)
}

/// Reads `address,label,category,source` CSV.
pub fn load_tags_from<R: Read>(reader: R, origin: impl AsRef<Path>) -> Result<TagSet> {
    let origin = origin.as_ref();
    let header_err = || Error::Header {
        path: origin.into(),
        expected: TAG_HEADER.join(","),
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|_| header_err())?.clone();
    if header.iter().collect::<Vec<_>>() != TAG_HEADER {
        return Err(header_err());
    }
    let mut warnings = Vec::new();
    let mut raw = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        let (address, label) = (rec[0].to_string(), rec[1].to_string());
        if address.is_empty() || label.is_empty() {
            return Err(Error::parse(origin, line, "tag needs a non-empty address and label"));
        }
        let category = Category::parse(&rec[2]).unwrap_or_else(|| {
            let msg = format!("{}:{line}: unknown category `{}` mapped to other", origin.display(), &rec[2]);
            log::warn!("{msg}");
            warnings.push(msg);
            Category::Other
        });
        raw.push(Tag {
            address,
            label,
            category,
            source: rec[3].to_string(),
        });
    }
    let mut set = TagSet::from_tags(raw);
    set.warnings = warnings;
    Ok(set)
}

/// Per-cluster union of member tags, plus tags whose address never occurs
/// in the ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterAttribution {
    by_cluster: BTreeMap<ClusterId, Vec<Tag>>,
    orphans: Vec<Tag>,
}

impl ClusterAttribution {
    /// Tags of a cluster, sorted; empty when untagged.
    pub fn tags(&self, cluster: ClusterId) -> &[Tag] {
        self.by_cluster.get(&cluster).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Tags reaching `address` through its cluster.
    pub fn tags_for_address(&self, store: &LedgerStore, partition: &Partition, address: &str) -> &[Tag] {
        match partition.cluster_of_address(store, address) {
            Some(c) => self.tags(c),
            None => &[],
        }
    }

    /// Distinct labels of a cluster, sorted.
    pub fn labels(&self, cluster: ClusterId) -> Vec<String> {
        let set: BTreeSet<&str> = self.tags(cluster).iter().map(|t| t.label.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn categories(&self, cluster: ClusterId) -> BTreeSet<Category> {
        self.tags(cluster).iter().map(|t| t.category).collect()
    }

    pub fn tagged_clusters(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.by_cluster.keys().copied()
    }

    pub fn tagged_cluster_count(&self) -> usize {
        self.by_cluster.len()
    }

    pub fn orphans(&self) -> &[Tag] {
        &self.orphans
    }

    /// CSV `address,label,reason`.
    pub fn write_orphans<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["address", "label", "reason"])?;
        for t in &self.orphans {
            w.write_record([t.address.as_str(), t.label.as_str(), "address not in ledger"])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Propagates each tag to every address in its address's cluster.
pub fn attribute_clusters(tags: &TagSet, partition: &Partition, store: &LedgerStore) -> ClusterAttribution {
    let mut by_cluster: BTreeMap<ClusterId, BTreeSet<Tag>> = BTreeMap::new();
    let mut orphans = Vec::new();
    for tag in &tags.tags {
        match partition.cluster_of_address(store, &tag.address) {
            Some(c) => {
                by_cluster.entry(c).or_default().insert(tag.clone());
            }
            None => orphans.push(tag.clone()),
        }
    }
    orphans.sort();
    ClusterAttribution {
        by_cluster: by_cluster.into_iter().map(|(c, s)| (c, s.into_iter().collect())).collect(),
        orphans,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::compute_partition;
    use crate::ledger::{Transaction, TxSlot};

    fn tx(n: u64, ins: &[&str], outs: &[&str]) -> Transaction {
        Transaction {
            txid: format!("{n:064x}"),
            height: n,
            timestamp: 0,
            inputs: ins.iter().map(|a| TxSlot::new(*a, 1)).collect(),
            outputs: outs.iter().map(|a| TxSlot::new(*a, 1)).collect(),
        }
    }

    #[test]
    fn dedup_and_unknown_category() {
        let text = "address,label,category,source\nA,BTC-e.com,exchange,we\nA,BTC-e.com,exchange,be\nB,SatoshiDice,casino,we\n";
        let set = load_tags_from(text.as_bytes(), "t.csv").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.tags[1].category, Category::Other);
        assert_eq!(set.warnings.len(), 1);
        assert!(set.warnings[0].contains("casino"));
    }

    #[test]
    fn header_is_required() {
        let err = load_tags_from("A,BTC-e.com,exchange,we\n".as_bytes(), "t.csv").unwrap_err();
        assert!(matches!(err, Error::Header { .. }));
        let err = load_tags_from("".as_bytes(), "t.csv").unwrap_err();
        assert!(matches!(err, Error::Header { .. }));
    }

    #[test]
    fn tag_spreads_over_cluster() {
        let store = LedgerStore::from_transactions(vec![tx(1, &["A", "B", "C"], &["D"])]).unwrap();
        let p = compute_partition(&store);
        let tags = TagSet::from_tags([Tag {
            address: "B".into(),
            label: "BTC-e.com".into(),
            category: Category::Exchange,
            source: "walletexplorer".into(),
        }]);
        let attr = attribute_clusters(&tags, &p, &store);
        for a in ["A", "B", "C"] {
            let t = attr.tags_for_address(&store, &p, a);
            assert_eq!(t.len(), 1, "{a}");
            assert_eq!(t[0].label, "BTC-e.com");
        }
        assert!(attr.tags_for_address(&store, &p, "D").is_empty());
        assert!(attr.orphans().is_empty());
    }

    #[test]
    fn unknown_address_becomes_orphan() {
        let store = LedgerStore::from_transactions(vec![tx(1, &["A"], &["B"])]).unwrap();
        let p = compute_partition(&store);
        let tags = TagSet::from_tags([Tag {
            address: "Q".into(),
            label: "Ghost".into(),
            category: Category::Mixer,
            source: "x".into(),
        }]);
        let attr = attribute_clusters(&tags, &p, &store);
        assert_eq!(attr.tagged_cluster_count(), 0);
        assert_eq!(attr.orphans().len(), 1);
        let mut out = Vec::new();
        attr.write_orphans(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "address,label,reason\nQ,Ghost,address not in ledger\n");
    }

    #[test]
    fn conflicting_labels_are_all_kept() {
        let store = LedgerStore::from_transactions(vec![tx(1, &["A", "B"], &["D"])]).unwrap();
        let p = compute_partition(&store);
        let mk = |a: &str, l: &str, c| Tag {
            address: a.into(),
            label: l.into(),
            category: c,
            source: String::new(),
        };
        let tags = TagSet::from_tags([mk("A", "Bitstamp", Category::Exchange), mk("B", "Helix", Category::Mixer)]);
        let attr = attribute_clusters(&tags, &p, &store);
        let c = p.cluster_of_address(&store, "A").unwrap();
        assert_eq!(attr.labels(c), vec!["Bitstamp", "Helix"]);
        assert_eq!(attr.categories(c).len(), 2);
    }
}
