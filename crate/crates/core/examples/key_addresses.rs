//! Collector detection: an address paid by two or more distinct addresses
//! of a family is a key address. One sender paying twice counts once.

use flowtrace::addrgraph::AddressGraph;
use flowtrace::campaign::{expand, time_filter};
use flowtrace::cluster::compute_partition;
use flowtrace::econ::{utc_date, RateTable};
use flowtrace::flows::{build_outrel, indegree_stats, key_addresses, IndegreeMode};
use flowtrace::ledger::{LedgerStore, Transaction, TxSlot};
use flowtrace::money::Rate;

const T0: i64 = 1_454_284_800;

fn tx(n: u64, ins: &[&str], outs: &[&str]) -> Transaction {
    Transaction {
        txid: format!("{n:064x}"),
        height: n,
        timestamp: T0 + n as i64,
        inputs: ins.iter().map(|a| TxSlot::new(*a, 1_000)).collect(),
        outputs: outs.iter().map(|a| TxSlot::new(*a, 900)).collect(),
    }
}

fn main() -> flowtrace::Result<()> {
    let store = LedgerStore::from_transactions(vec![
        tx(1, &["p1", "p2", "p3", "op"], &["C"]),
        tx(2, &["p1"], &["X"]),
        tx(3, &["p1"], &["X"]),
        tx(4, &["op", "C"], &["exit"]),
    ])?;
    let mut rates = RateTable::new();
    rates.insert(utc_date(T0), Rate::parse("372.50").unwrap())?;
    let partition = compute_partition(&store);
    let graph = AddressGraph::build(&store, &rates)?;
    let seeds = vec!["p1".to_string()];
    let campaign = time_filter(expand("Demo", &seeds, &partition, &store), None, &store);
    let outrel = build_outrel(&campaign, &graph, &store);
    for mode in [IndegreeMode::DistinctSources, IndegreeMode::DistinctTxs] {
        let keys = key_addresses(&outrel, mode);
        println!("{mode}:");
        for k in &keys {
            println!("  {} indegree {} expanded {}", store.address(k.address), k.indegree, k.was_expanded);
        }
        println!("  {:?}", indegree_stats([keys.as_slice()]));
    }
    outrel.write_csv(&store, std::io::stdout()).expect("stdout");
    Ok(())
}
