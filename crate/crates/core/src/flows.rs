//! Outgoing-relationships graphs, key (collector) addresses, exit points
//! and cross-family links.
//!
//! A family's outgoing-relationships graph holds every time-filtered
//! expanded address and every address it pays. A node whose in-degree
//! within that graph reaches two is a key address. In-degree counts
//! distinct paying expanded addresses by default; the alternative mode
//! counts distinct paying transactions instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addrgraph::AddressGraph;
use crate::attribution::{Category, ClusterAttribution};
use crate::campaign::FamilyCampaign;
use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::ledger::{AddrId, LedgerStore, Role, TxIdx};

/// Minimum in-degree for a key address.
pub const KEY_THRESHOLD: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndegreeMode {
    #[default]
    DistinctSources,
    DistinctTxs,
}

impl FromStr for IndegreeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distinct_sources" => Ok(IndegreeMode::DistinctSources),
            "distinct_txs" => Ok(IndegreeMode::DistinctTxs),
            other => Err(Error::Config(format!(
                "indegree mode `{other}`, expected distinct_sources or distinct_txs"
            ))),
        }
    }
}

impl fmt::Display for IndegreeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndegreeMode::DistinctSources => "distinct_sources",
            IndegreeMode::DistinctTxs => "distinct_txs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeClass {
    Expanded,
    External,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Expanded => "expanded",
            NodeClass::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutEdge {
    pub src: AddrId,
    pub dst: AddrId,
    pub tx_count: u64,
    pub value_sat: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutRelGraph {
    pub family: String,
    nodes: BTreeMap<AddrId, NodeClass>,
    /// Sorted by (src, dst).
    edges: Vec<OutEdge>,
    /// (dst, tx, src) for every expanded input paying a node, sorted.
    payments: Vec<(AddrId, TxIdx, AddrId)>,
}

impl OutRelGraph {
    pub fn nodes(&self) -> impl Iterator<Item = (AddrId, NodeClass)> + '_ {
        self.nodes.iter().map(|(a, c)| (*a, *c))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn class_of(&self, a: AddrId) -> Option<NodeClass> {
        self.nodes.get(&a).copied()
    }

    pub fn edges(&self) -> &[OutEdge] {
        &self.edges
    }

    /// Number of distinct expanded addresses paying `a`.
    pub fn distinct_sources(&self, a: AddrId) -> usize {
        self.edges.iter().filter(|e| e.dst == a).count()
    }

    /// In-degree of every destination under `mode`.
    pub fn indegrees(&self, mode: IndegreeMode) -> BTreeMap<AddrId, usize> {
        match mode {
            IndegreeMode::DistinctSources => {
                let mut m = BTreeMap::new();
                for e in &self.edges {
                    *m.entry(e.dst).or_insert(0) += 1;
                }
                m
            }
            IndegreeMode::DistinctTxs => {
                let mut m = BTreeMap::new();
                let mut last = None;
                for &(dst, tx, _) in &self.payments {
                    if last != Some((dst, tx)) {
                        *m.entry(dst).or_insert(0) += 1;
                        last = Some((dst, tx));
                    }
                }
                m
            }
        }
    }

    /// Removes one edge; used to probe degree sensitivity.
    pub fn without_edge(&self, idx: usize) -> OutRelGraph {
        let mut g = self.clone();
        let e = g.edges.remove(idx);
        g.payments.retain(|&(dst, _, src)| (dst, src) != (e.dst, e.src));
        g
    }

    /// CSV `src,dst,value_sat,src_class,dst_class`.
    pub fn write_csv<W: Write>(&self, store: &LedgerStore, mut out: W) -> std::io::Result<()> {
        writeln!(out, "src,dst,value_sat,src_class,dst_class")?;
        for e in &self.edges {
            let class = |a| self.nodes.get(&a).copied().unwrap_or(NodeClass::External).as_str();
            writeln!(
                out,
                "{},{},{},{},{}",
                store.address(e.src),
                store.address(e.dst),
                e.value_sat,
                class(e.src),
                class(e.dst)
            )?;
        }
        out.flush()
    }
}

/// Builds a family's outgoing-relationships graph from the change-free
/// address graph.
pub fn build_outrel(campaign: &FamilyCampaign, graph: &AddressGraph, store: &LedgerStore) -> OutRelGraph {
    let mut nodes: BTreeMap<AddrId, NodeClass> = campaign.expanded_tf.iter().map(|&a| (a, NodeClass::Expanded)).collect();
    let mut edges = Vec::new();
    for &src in &campaign.expanded_tf {
        for e in graph.out_edges(src) {
            edges.push(OutEdge {
                src,
                dst: e.dst,
                tx_count: e.tx_count,
                value_sat: e.value_sat,
            });
            nodes.entry(e.dst).or_insert(NodeClass::External);
        }
    }

    // Distinct transactions in which some expanded address pays each node.
    let mut payments: BTreeSet<(AddrId, TxIdx, AddrId)> = BTreeSet::new();
    for &src in &campaign.expanded_tf {
        for &(tx, role) in store.occurrences(src) {
            if role != Role::Input {
                continue;
            }
            let inputs = store.inputs(tx);
            for o in store.outputs(tx) {
                if !inputs.iter().any(|i| i.addr == o.addr) {
                    payments.insert((o.addr, tx, src));
                }
            }
        }
    }

    OutRelGraph {
        family: campaign.family.clone(),
        nodes,
        edges,
        payments: payments.into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeyAddress {
    #[serde(skip)]
    pub address: AddrId,
    pub family: String,
    pub indegree: usize,
    /// Already part of the family's time-filtered expanded set.
    pub was_expanded: bool,
    pub exit_tags: Vec<String>,
}

/// Nodes with in-degree ≥ 2, sorted by in-degree descending then address.
pub fn key_addresses(graph: &OutRelGraph, mode: IndegreeMode) -> Vec<KeyAddress> {
    let mut keys: Vec<KeyAddress> = graph
        .indegrees(mode)
        .into_iter()
        .filter(|&(_, d)| d >= KEY_THRESHOLD)
        .map(|(a, d)| KeyAddress {
            address: a,
            family: graph.family.clone(),
            indegree: d,
            was_expanded: graph.class_of(a) == Some(NodeClass::Expanded),
            exit_tags: Vec::new(),
        })
        .collect();
    keys.sort_by(|a, b| b.indegree.cmp(&a.indegree).then(a.address.cmp(&b.address)));
    keys
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndegreeSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; 0 below two observations.
    pub std_dev: f64,
    pub max: usize,
    /// True when no family produced a key address.
    pub empty: bool,
}

/// Statistics over all key addresses of all families. An address that is
/// key in two families contributes once per family.
pub fn indegree_stats<'a>(families: impl IntoIterator<Item = &'a [KeyAddress]>) -> IndegreeSummary {
    let mut d: Vec<usize> = families.into_iter().flatten().map(|k| k.indegree).collect();
    if d.is_empty() {
        return IndegreeSummary {
            count: 0,
            mean: 0.0,
            median: 0.0,
            std_dev: 0.0,
            max: 0,
            empty: true,
        };
    }
    d.sort_unstable();
    let n = d.len();
    let mean = d.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        d[n / 2] as f64
    } else {
        (d[n / 2 - 1] + d[n / 2]) as f64 / 2.0
    };
    let std_dev = if n > 1 {
        (d.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    IndegreeSummary {
        count: n,
        mean,
        median,
        std_dev,
        max: d[n - 1],
        empty: false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExitPoint {
    pub family: String,
    pub address: AddrId,
    pub labels: Vec<String>,
    pub categories: BTreeSet<Category>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExitReport {
    pub points: Vec<ExitPoint>,
    /// Key addresses per category; a key in a multi-category cluster counts
    /// under each.
    pub category_counts: BTreeMap<Category, usize>,
    pub tagged_keys: usize,
    /// Distinct tagged clusters reached by key addresses.
    pub tagged_clusters: usize,
}

/// Annotates each key with its cluster's tag labels and tallies categories.
pub fn exit_points(keys: &mut [KeyAddress], partition: &Partition, attribution: &ClusterAttribution) -> ExitReport {
    let mut report = ExitReport::default();
    for c in Category::ALL {
        report.category_counts.insert(c, 0);
    }
    let mut clusters = BTreeSet::new();
    for k in keys.iter_mut() {
        let cluster = partition.cluster_of(k.address);
        k.exit_tags = attribution.labels(cluster);
        let categories = attribution.categories(cluster);
        if !k.exit_tags.is_empty() {
            report.tagged_keys += 1;
            clusters.insert(cluster);
        }
        for c in &categories {
            *report.category_counts.get_mut(c).expect("all categories seeded") += 1;
        }
        report.points.push(ExitPoint {
            family: k.family.clone(),
            address: k.address,
            labels: k.exit_tags.clone(),
            categories,
        });
    }
    report.tagged_clusters = clusters.len();
    report
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyLink {
    pub first: String,
    pub second: String,
    pub shared: Vec<AddrId>,
}

/// Every unordered pair of families sharing at least one key address.
pub fn cross_family_links(keys: &BTreeMap<String, Vec<KeyAddress>>) -> Vec<FamilyLink> {
    let sets: Vec<(&String, BTreeSet<AddrId>)> = keys
        .iter()
        .map(|(f, ks)| (f, ks.iter().map(|k| k.address).collect()))
        .collect();
    let mut links = Vec::new();
    for (i, (fa, a)) in sets.iter().enumerate() {
        for (fb, b) in &sets[i + 1..] {
            let shared: Vec<AddrId> = a.intersection(b).copied().collect();
            if !shared.is_empty() {
                links.push(FamilyLink {
                    first: (*fa).clone(),
                    second: (*fb).clone(),
                    shared,
                });
            }
        }
    }
    links
}

/// CSV `family,new_key_addr,key_expanded_addr`.
pub fn write_key_summary<W: Write>(keys: &BTreeMap<String, Vec<KeyAddress>>, out: W) -> Result<()> {
    let mut rows: Vec<(&String, usize, usize)> = keys
        .iter()
        .map(|(f, ks)| {
            let expanded = ks.iter().filter(|k| k.was_expanded).count();
            (f, ks.len() - expanded, expanded)
        })
        .collect();
    rows.sort_by(|a, b| (b.1 + b.2).cmp(&(a.1 + a.2)).then(a.0.cmp(b.0)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "new_key_addr", "key_expanded_addr"])?;
    for (f, new, exp) in rows {
        w.write_record([f.as_str(), &new.to_string(), &exp.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// CSV `family,address,indegree,was_expanded,exit_tags`; tags are `;`-joined.
pub fn write_key_addresses<W: Write>(keys: &BTreeMap<String, Vec<KeyAddress>>, store: &LedgerStore, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "address", "indegree", "was_expanded", "exit_tags"])?;
    for (f, ks) in keys {
        for k in ks {
            w.write_record([
                f.as_str(),
                store.address(k.address),
                &k.indegree.to_string(),
                if k.was_expanded { "true" } else { "false" },
                &k.exit_tags.join(";"),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// CSV `category,key_addresses`.
pub fn write_exit_categories<W: Write>(report: &ExitReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["category", "key_addresses"])?;
    for (c, n) in &report.category_counts {
        w.write_record([c.as_str(), &n.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// CSV `family_a,family_b,shared_count,shared_addresses`.
pub fn write_links<W: Write>(links: &[FamilyLink], store: &LedgerStore, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family_a", "family_b", "shared_count", "shared_addresses"])?;
    for l in links {
        let shared: Vec<&str> = l.shared.iter().map(|&a| store.address(a)).collect();
        w.write_record([l.first.as_str(), l.second.as_str(), &l.shared.len().to_string(), &shared.join(";")])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
