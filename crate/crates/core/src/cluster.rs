//! Multiple-input (co-spend) clustering and the cluster graph.

use std::collections::HashMap;
use std::io::Write;

use crate::addrgraph::AddressGraph;
use crate::ledger::{AddrId, LedgerStore, TxIdx};
use crate::money::UsdExact;

/// Disjoint sets over `0..n` with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut node = x;
        while self.parent[node] as usize != root {
            let next = self.parent[node] as usize;
            self.parent[node] = root as u32;
            node = next;
        }
        root
    }

    /// Returns true when two distinct sets were merged.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Cluster identifier: the lexicographically smallest member address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub AddrId);

impl ClusterId {
    pub fn representative(self) -> AddrId {
        self.0
    }
}

/// Address → cluster assignment covering every address in the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    cluster_of: Vec<ClusterId>,
    /// Cluster ids in ascending order.
    clusters: Vec<ClusterId>,
    member_offsets: Vec<u32>,
    members: Vec<AddrId>,
}

impl Partition {
    fn from_union_find(mut uf: UnionFind) -> Partition {
        let n = uf.len();
        // Ids are visited in ascending order, so the first member seen for a
        // root is the smallest one.
        let mut rep_of_root: Vec<u32> = vec![u32::MAX; n];
        let mut cluster_of = Vec::with_capacity(n);
        for a in 0..n {
            let r = uf.find(a);
            if rep_of_root[r] == u32::MAX {
                rep_of_root[r] = a as u32;
            }
            cluster_of.push(ClusterId(AddrId(rep_of_root[r])));
        }
        let mut counts = vec![0u32; n];
        for c in &cluster_of {
            counts[c.0.index()] += 1;
        }
        let clusters: Vec<ClusterId> = (0..n)
            .filter(|&a| counts[a] > 0)
            .map(|a| ClusterId(AddrId(a as u32)))
            .collect();
        let mut member_offsets = Vec::with_capacity(clusters.len() + 1);
        member_offsets.push(0u32);
        let mut slot_of = vec![0u32; n];
        for (i, c) in clusters.iter().enumerate() {
            slot_of[c.0.index()] = i as u32;
            let last = *member_offsets.last().expect("non-empty");
            member_offsets.push(last + counts[c.0.index()]);
        }
        let mut cursor: Vec<u32> = member_offsets[..clusters.len()].to_vec();
        let mut members = vec![AddrId(0); n];
        for (a, c) in cluster_of.iter().enumerate() {
            let s = slot_of[c.0.index()] as usize;
            members[cursor[s] as usize] = AddrId(a as u32);
            cursor[s] += 1;
        }
        Partition {
            cluster_of,
            clusters,
            member_offsets,
            members,
        }
    }

    pub fn cluster_of(&self, addr: AddrId) -> ClusterId {
        self.cluster_of[addr.index()]
    }

    /// Cluster of an address by name, if the address is in the ledger.
    pub fn cluster_of_address(&self, store: &LedgerStore, address: &str) -> Option<ClusterId> {
        store.addr_id(address).map(|a| self.cluster_of(a))
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn address_count(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn clusters(&self) -> &[ClusterId] {
        &self.clusters
    }

    /// Members of a cluster in ascending (lexicographic) order.
    pub fn members(&self, cluster: ClusterId) -> &[AddrId] {
        match self.clusters.binary_search(&cluster) {
            Ok(i) => &self.members[self.member_offsets[i] as usize..self.member_offsets[i + 1] as usize],
            Err(_) => &[],
        }
    }

    pub fn same_cluster(&self, a: AddrId, b: AddrId) -> bool {
        self.cluster_of(a) == self.cluster_of(b)
    }

    /// CSV `address,cluster_rep`.
    pub fn write_csv<W: Write>(&self, store: &LedgerStore, mut out: W) -> std::io::Result<()> {
        writeln!(out, "address,cluster_rep")?;
        for (a, c) in self.cluster_of.iter().enumerate() {
            writeln!(out, "{},{}", store.address(AddrId(a as u32)), store.address(c.0))?;
        }
        out.flush()
    }
}

/// Co-spend partition: all input addresses of a transaction share a cluster.
pub fn compute_partition(store: &LedgerStore) -> Partition {
    let order: Vec<TxIdx> = store.tx_indices().collect();
    compute_partition_ordered(store, &order)
}

/// Same as [`compute_partition`] but unions transactions in the given order.
/// Transactions not listed contribute no links; their addresses still
/// appear as singletons.
pub fn compute_partition_ordered(store: &LedgerStore, order: &[TxIdx]) -> Partition {
    let mut uf = UnionFind::new(store.address_count());
    for &tx in order {
        let inputs = store.inputs(tx);
        if let Some((first, rest)) = inputs.split_first() {
            for s in rest {
                uf.union(first.addr.index(), s.addr.index());
            }
        }
    }
    Partition::from_union_find(uf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterEdge {
    pub src: ClusterId,
    pub dst: ClusterId,
    pub tx_count: u64,
    pub value_sat: u64,
    pub value_usd: UsdExact,
    /// Flow between distinct addresses of the same cluster.
    pub intra: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterGraph {
    edges: Vec<ClusterEdge>,
}

impl ClusterGraph {
    pub fn edges(&self) -> &[ClusterEdge] {
        &self.edges
    }

    pub fn edge(&self, src: ClusterId, dst: ClusterId) -> Option<&ClusterEdge> {
        self.edges
            .binary_search_by_key(&(src, dst), |e| (e.src, e.dst))
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn total_sat(&self) -> u64 {
        self.edges.iter().map(|e| e.value_sat).sum()
    }

    /// CSV `src_cluster,dst_cluster,tx_count,value_sat,value_usd,intra`.
    pub fn write_csv<W: Write>(&self, store: &LedgerStore, mut out: W) -> std::io::Result<()> {
        writeln!(out, "src_cluster,dst_cluster,tx_count,value_sat,value_usd,intra")?;
        for e in &self.edges {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                store.address(e.src.0),
                store.address(e.dst.0),
                e.tx_count,
                e.value_sat,
                e.value_usd.to_cents().to_decimal_string(),
                e.intra
            )?;
        }
        out.flush()
    }
}

/// Aggregates address edges up to cluster granularity.
pub fn build_cluster_graph(partition: &Partition, graph: &AddressGraph) -> ClusterGraph {
    let mut acc: HashMap<(ClusterId, ClusterId), ClusterEdge> = HashMap::new();
    for e in graph.edges() {
        let src = partition.cluster_of(e.src);
        let dst = partition.cluster_of(e.dst);
        let entry = acc.entry((src, dst)).or_insert(ClusterEdge {
            src,
            dst,
            tx_count: 0,
            value_sat: 0,
            value_usd: UsdExact::default(),
            intra: src == dst,
        });
        entry.tx_count += e.tx_count;
        entry.value_sat += e.value_sat;
        entry.value_usd += e.value_usd;
    }
    let mut edges: Vec<ClusterEdge> = acc.into_values().collect();
    edges.sort_unstable_by_key(|e| (e.src, e.dst));
    ClusterGraph { edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econ::rates::RateTable;
    use crate::ledger::{Transaction, TxSlot};
    use crate::money::Rate;
    use chrono::NaiveDate;

    fn tx(n: u64, ins: &[(&str, u64)], outs: &[(&str, u64)]) -> Transaction {
        Transaction {
            txid: format!("{n:064x}"),
            height: n,
            timestamp: 1_451_606_400,
            inputs: ins.iter().map(|(a, v)| TxSlot::new(*a, *v)).collect(),
            outputs: outs.iter().map(|(a, v)| TxSlot::new(*a, *v)).collect(),
        }
    }

    fn rates() -> RateTable {
        let mut r = RateTable::new();
        r.insert(NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(), Rate(400_000_000)).unwrap();
        r
    }

    #[test]
    fn co_spend_is_transitive() {
        let store = LedgerStore::from_transactions(vec![
            tx(1, &[("A", 1), ("B", 1)], &[("X", 2)]),
            tx(2, &[("B", 1), ("C", 1)], &[("Y", 2)]),
        ])
        .unwrap();
        let p = compute_partition(&store);
        let a = p.cluster_of_address(&store, "A").unwrap();
        let names: Vec<&str> = p.members(a).iter().map(|&m| store.address(m)).collect();
        assert_eq!(names, vec!["A", "B", "C"]);
        assert_eq!(store.address(a.representative()), "A");
        assert_eq!(p.cluster_count(), 3); // {A,B,C}, {X}, {Y}
    }

    #[test]
    fn single_input_ledger_is_all_singletons() {
        let store = LedgerStore::from_transactions(vec![
            tx(1, &[], &[("A", 5)]),
            tx(2, &[("A", 5)], &[("B", 2), ("C", 2)]),
            tx(3, &[("B", 2)], &[("C", 1)]),
        ])
        .unwrap();
        let p = compute_partition(&store);
        assert_eq!(p.cluster_count(), store.address_count());
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(uf.union(3, 4));
        assert!(!uf.union(1, 0));
        assert!(uf.union(1, 4));
        assert_eq!(uf.find(0), uf.find(3));
        assert_ne!(uf.find(2), uf.find(0));
    }

    #[test]
    fn cluster_graph_identity_and_aggregation() {
        // singletons: one address edge -> one cluster edge with the same totals
        let store = LedgerStore::from_transactions(vec![tx(1, &[("A", 10)], &[("B", 10)])]).unwrap();
        let g = AddressGraph::build(&store, &rates()).unwrap();
        let cg = build_cluster_graph(&compute_partition(&store), &g);
        assert_eq!(cg.edges().len(), 1);
        let (e, ce) = (g.edges()[0], cg.edges()[0]);
        assert_eq!((ce.tx_count, ce.value_sat, ce.value_usd, ce.intra), (e.tx_count, e.value_sat, e.value_usd, false));

        // {A,B} both pay C
        let store = LedgerStore::from_transactions(vec![
            tx(1, &[("A", 10), ("B", 10)], &[("Q", 20)]),
            tx(2, &[("A", 4)], &[("C", 4)]),
            tx(3, &[("B", 6)], &[("C", 6)]),
        ])
        .unwrap();
        let g = AddressGraph::build(&store, &rates()).unwrap();
        let p = compute_partition(&store);
        let cg = build_cluster_graph(&p, &g);
        let ab = p.cluster_of_address(&store, "A").unwrap();
        let c = p.cluster_of_address(&store, "C").unwrap();
        let e = cg.edge(ab, c).unwrap();
        assert_eq!((e.tx_count, e.value_sat), (2, 10));
        assert_eq!(cg.total_sat(), g.total_sat());
    }

    #[test]
    fn intra_cluster_flow_is_flagged() {
        let store = LedgerStore::from_transactions(vec![
            tx(1, &[("A", 10), ("B", 10)], &[("Q", 20)]),
            tx(2, &[("A", 4)], &[("B", 4)]),
        ])
        .unwrap();
        let g = AddressGraph::build(&store, &rates()).unwrap();
        let p = compute_partition(&store);
        let cg = build_cluster_graph(&p, &g);
        let ab = p.cluster_of_address(&store, "A").unwrap();
        assert!(cg.edge(ab, ab).unwrap().intra);
    }

    #[test]
    fn partition_csv() {
        let store = LedgerStore::from_transactions(vec![tx(1, &[("B", 1), ("A", 1)], &[("C", 2)])]).unwrap();
        let mut out = Vec::new();
        compute_partition(&store).write_csv(&store, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "address,cluster_rep\nA,A\nB,A\nC,C\n");
    }
}
