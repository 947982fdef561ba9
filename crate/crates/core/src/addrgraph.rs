//! Address graph: aggregated directed value flows between addresses.
//!
//! Every transaction connects each of its input addresses to each output
//! address that does not also appear among its inputs (explicit change is
//! dropped). An output's value is split across the input addresses in
//! proportion to what they contributed. Splits are computed exactly on
//! integers and apportioned to whole satoshi with the largest-remainder
//! rule, so each output's flows sum to its value.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::econ::rates::{utc_date, RateTable};
use crate::error::{Error, Result};
use crate::ledger::{AddrId, LedgerStore, TxIdx};
use crate::money::UsdExact;

/// One attributed flow inside a single transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flow {
    pub src: AddrId,
    pub dst: AddrId,
    pub sat: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressEdge {
    pub src: AddrId,
    pub dst: AddrId,
    pub tx_count: u64,
    pub value_sat: u64,
    pub value_usd: UsdExact,
}

#[derive(Debug, Clone, Copy, Default)]
struct EdgeAcc {
    tx_count: u64,
    sat: u64,
    usd: UsdExact,
}

fn group_by_addr(slots: &[crate::ledger::Slot]) -> Vec<(AddrId, u64)> {
    let mut v: Vec<(AddrId, u64)> = slots.iter().map(|s| (s.addr, s.value)).collect();
    v.sort_unstable_by_key(|&(a, _)| a);
    let mut out: Vec<(AddrId, u64)> = Vec::with_capacity(v.len());
    for (a, x) in v {
        match out.last_mut() {
            Some((b, y)) if *b == a => *y += x,
            _ => out.push((a, x)),
        }
    }
    out
}

/// Splits `value` across `weights` proportionally; the shares sum to
/// `value` exactly. Leftover satoshi go to the largest fractional parts,
/// ties to the earlier (lexicographically smaller) input.
fn apportion(value: u64, weights: &[(AddrId, u64)], total_weight: u128) -> Vec<u64> {
    if total_weight == 0 {
        return vec![0; weights.len()];
    }
    let mut shares = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    let mut assigned: u128 = 0;
    for (i, &(_, w)) in weights.iter().enumerate() {
        let num = value as u128 * w as u128;
        let floor = num / total_weight;
        assigned += floor;
        shares.push(floor as u64);
        remainders.push((num % total_weight, i));
    }
    let leftover = (value as u128 - assigned) as usize;
    if leftover > 0 {
        remainders.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in remainders.iter().take(leftover) {
            shares[i] += 1;
        }
    }
    shares
}

/// Attributed flows of one transaction, ordered by (src, dst).
///
/// Coinbase transactions yield nothing and zero-value shares are dropped.
/// Repeated addresses on either side are merged before splitting.
pub fn attribute_flows(store: &LedgerStore, tx: TxIdx) -> Vec<Flow> {
    let inputs = group_by_addr(store.inputs(tx));
    if inputs.is_empty() {
        return Vec::new();
    }
    let total_in: u128 = inputs.iter().map(|&(_, v)| v as u128).sum();
    let outputs = group_by_addr(store.outputs(tx));
    let mut flows = Vec::new();
    for &(dst, value) in &outputs {
        if inputs.binary_search_by_key(&dst, |&(a, _)| a).is_ok() {
            continue;
        }
        for (&(src, _), sat) in inputs.iter().zip(apportion(value, &inputs, total_in)) {
            if sat > 0 {
                flows.push(Flow { src, dst, sat });
            }
        }
    }
    flows.sort_unstable_by_key(|f| (f.src, f.dst));
    flows
}

/// Directed address graph with one aggregated edge per (src, dst).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AddressGraph {
    /// Sorted by (src, dst).
    edges: Vec<AddressEdge>,
    /// `out_offsets[a]..out_offsets[a+1]` indexes `edges`.
    out_offsets: Vec<u32>,
    /// Edge positions sorted by (dst, src).
    in_order: Vec<u32>,
    in_offsets: Vec<u32>,
}

type Acc = HashMap<(AddrId, AddrId), EdgeAcc>;

fn accumulate(store: &LedgerStore, rates: &RateTable, txs: &[TxIdx]) -> std::result::Result<Acc, chrono::NaiveDate> {
    let mut acc = Acc::new();
    let mut missing: Option<chrono::NaiveDate> = None;
    for &tx in txs {
        let flows = attribute_flows(store, tx);
        if flows.is_empty() {
            continue;
        }
        let date = utc_date(store.tx(tx).timestamp);
        let Some(rate) = rates.get(date) else {
            missing = Some(missing.map_or(date, |m| m.min(date)));
            continue;
        };
        if missing.is_some() {
            continue;
        }
        for f in flows {
            let e = acc.entry((f.src, f.dst)).or_default();
            e.tx_count += 1;
            e.sat += f.sat;
            e.usd += rate.value_of(f.sat);
        }
    }
    match missing {
        Some(d) => Err(d),
        None => Ok(acc),
    }
}

fn merge_acc(mut a: Acc, b: Acc) -> Acc {
    if a.len() < b.len() {
        return merge_acc(b, a);
    }
    for (k, v) in b {
        let e = a.entry(k).or_default();
        e.tx_count += v.tx_count;
        e.sat += v.sat;
        e.usd += v.usd;
    }
    a
}

const SHARD: usize = 4096;

impl AddressGraph {
    /// Builds the graph over every transaction in the store.
    pub fn build(store: &LedgerStore, rates: &RateTable) -> Result<AddressGraph> {
        let all: Vec<TxIdx> = store.tx_indices().collect();
        Self::build_subset(store, rates, &all)
    }

    /// Builds the graph over a subset of the store's transactions.
    pub fn build_subset(store: &LedgerStore, rates: &RateTable, txs: &[TxIdx]) -> Result<AddressGraph> {
        let acc = txs
            .par_chunks(SHARD)
            .map(|chunk| accumulate(store, rates, chunk))
            .reduce(
                || Ok(Acc::new()),
                |a, b| match (a, b) {
                    (Ok(a), Ok(b)) => Ok(merge_acc(a, b)),
                    (Err(x), Err(y)) => Err(x.min(y)),
                    (Err(x), _) | (_, Err(x)) => Err(x),
                },
            )
            .map_err(Error::MissingRate)?;
        let mut edges: Vec<AddressEdge> = acc
            .into_iter()
            .map(|((src, dst), e)| AddressEdge {
                src,
                dst,
                tx_count: e.tx_count,
                value_sat: e.sat,
                value_usd: e.usd,
            })
            .collect();
        edges.par_sort_unstable_by_key(|e| (e.src, e.dst));
        Ok(Self::from_sorted_edges(edges, store.address_count()))
    }

    fn from_sorted_edges(edges: Vec<AddressEdge>, n_addresses: usize) -> AddressGraph {
        let mut out_offsets = vec![0u32; n_addresses + 1];
        let mut in_offsets = vec![0u32; n_addresses + 1];
        for e in &edges {
            out_offsets[e.src.index() + 1] += 1;
            in_offsets[e.dst.index() + 1] += 1;
        }
        for i in 0..n_addresses {
            out_offsets[i + 1] += out_offsets[i];
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut in_order: Vec<u32> = (0..edges.len() as u32).collect();
        in_order.par_sort_unstable_by_key(|&i| {
            let e = &edges[i as usize];
            (e.dst, e.src)
        });
        AddressGraph {
            edges,
            out_offsets,
            in_order,
            in_offsets,
        }
    }

    /// Sum of two graphs over the same store (disjoint transaction sets).
    pub fn merge(&self, other: &AddressGraph) -> AddressGraph {
        let n = self.out_offsets.len().max(other.out_offsets.len()).saturating_sub(1);
        let mut acc: std::collections::BTreeMap<(AddrId, AddrId), EdgeAcc> = Default::default();
        for e in self.edges.iter().chain(&other.edges) {
            let a = acc.entry((e.src, e.dst)).or_default();
            a.tx_count += e.tx_count;
            a.sat += e.value_sat;
            a.usd += e.value_usd;
        }
        let edges = acc
            .into_iter()
            .map(|((src, dst), e)| AddressEdge {
                src,
                dst,
                tx_count: e.tx_count,
                value_sat: e.sat,
                value_usd: e.usd,
            })
            .collect();
        Self::from_sorted_edges(edges, n)
    }

    pub fn edges(&self) -> &[AddressEdge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, src: AddrId, dst: AddrId) -> Option<&AddressEdge> {
        let out = self.out_edges(src);
        out.binary_search_by_key(&dst, |e| e.dst).ok().map(|i| &out[i])
    }

    /// Outgoing edges of `src`, ordered by destination.
    pub fn out_edges(&self, src: AddrId) -> &[AddressEdge] {
        let a = src.index();
        if a + 1 >= self.out_offsets.len() {
            return &[];
        }
        &self.edges[self.out_offsets[a] as usize..self.out_offsets[a + 1] as usize]
    }

    /// Incoming edges of `dst`, ordered by source.
    pub fn in_edges(&self, dst: AddrId) -> impl Iterator<Item = &AddressEdge> + '_ {
        let a = dst.index();
        let range = if a + 1 >= self.in_offsets.len() {
            0..0
        } else {
            self.in_offsets[a] as usize..self.in_offsets[a + 1] as usize
        };
        self.in_order[range].iter().map(move |&i| &self.edges[i as usize])
    }

    /// Out-neighbours of `address` by name, ordered lexicographically.
    pub fn out_neighbors<'s>(&'s self, store: &'s LedgerStore, address: &str) -> Vec<(&'s str, &'s AddressEdge)> {
        match store.addr_id(address) {
            Some(id) => self.out_edges(id).iter().map(|e| (store.address(e.dst), e)).collect(),
            None => Vec::new(),
        }
    }

    pub fn total_sat(&self) -> u64 {
        self.edges.iter().map(|e| e.value_sat).sum()
    }

    /// CSV `src,dst,tx_count,value_sat,value_usd`.
    pub fn write_csv<W: Write>(&self, store: &LedgerStore, mut out: W) -> std::io::Result<()> {
        writeln!(out, "src,dst,tx_count,value_sat,value_usd")?;
        for e in &self.edges {
            writeln!(
                out,
                "{},{},{},{},{}",
                store.address(e.src),
                store.address(e.dst),
                e.tx_count,
                e.value_sat,
                e.value_usd.to_cents().to_decimal_string()
            )?;
        }
        out.flush()
    }
}

/// Free-function form of [`AddressGraph::build`].
pub fn build_address_graph(store: &LedgerStore, rates: &RateTable) -> Result<AddressGraph> {
    AddressGraph::build(store, rates)
}
