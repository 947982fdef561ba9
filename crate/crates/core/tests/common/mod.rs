#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use flowtrace::cluster::Partition;
use flowtrace::ledger::{LedgerStore, Transaction, TxSlot};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const T0: i64 = 1_451_606_400;

/// A random but well-formed ledger: unique txids, non-decreasing time,
/// non-negative fees, roughly one coinbase in five.
pub fn random_ledger(seed: u64, max_txs: usize, max_addrs: usize) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_addrs = rng.gen_range(1..=max_addrs);
    let n_txs = rng.gen_range(1..=max_txs);
    let pool: Vec<String> = (0..n_addrs).map(|i| format!("a{i:04}")).collect();
    let mut t = T0;
    (0..n_txs)
        .map(|i| {
            t += rng.gen_range(0..5_000);
            let n_in = if rng.gen_bool(0.2) { 0 } else { rng.gen_range(1..=4) };
            let inputs: Vec<TxSlot> = (0..n_in)
                .map(|_| TxSlot::new(pool.choose(&mut rng).unwrap().clone(), rng.gen_range(0..1_000_000)))
                .collect();
            let budget: u64 = if n_in == 0 { 5_000_000 } else { inputs.iter().map(|s| s.value).sum() };
            let n_out = rng.gen_range(1..=4);
            let mut left = budget;
            let outputs = (0..n_out)
                .map(|_| {
                    let v = rng.gen_range(0..=left);
                    left -= v;
                    TxSlot::new(pool.choose(&mut rng).unwrap().clone(), v)
                })
                .collect();
            Transaction {
                txid: format!("{:064x}", seed.wrapping_mul(1_000_003) as u128 * 65_536 + i as u128),
                height: i as u64,
                timestamp: t,
                inputs,
                outputs,
            }
        })
        .collect()
}

/// Connected components of the graph linking every pair of addresses
/// that appear as inputs of one transaction, by breadth-first search.
pub fn brute_components(txs: &[Transaction]) -> BTreeSet<BTreeSet<String>> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for tx in txs {
        for s in tx.inputs.iter().chain(&tx.outputs) {
            adj.entry(&s.address).or_default();
        }
        for a in &tx.inputs {
            for b in &tx.inputs {
                if a.address != b.address {
                    adj.get_mut(a.address.as_str()).unwrap().insert(&b.address);
                }
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = BTreeSet::new();
    for &start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::from([start.to_string()]);
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if seen.insert(y) {
                    comp.insert(y.to_string());
                    queue.push_back(y);
                }
            }
        }
        out.insert(comp);
    }
    out
}

pub fn partition_sets(p: &Partition, store: &LedgerStore) -> BTreeSet<BTreeSet<String>> {
    p.clusters()
        .iter()
        .map(|&c| p.members(c).iter().map(|&a| store.address(a).to_string()).collect())
        .collect()
}

/// Earliest timestamp of any transaction mentioning `address`.
pub fn first_seen_scan(txs: &[Transaction], address: &str) -> Option<i64> {
    txs.iter()
        .filter(|t| t.inputs.iter().chain(&t.outputs).any(|s| s.address == address))
        .map(|t| t.timestamp)
        .min()
}
