//! Load a JSONL ledger and look around in it.
//!
//!     cargo run --example ingest -- path/to/ledger.jsonl
//!
//! Without an argument a three-transaction ledger is built in memory.

use flowtrace::ledger::{ingest, LedgerFormat, LedgerStore, Transaction, TxSlot};

fn demo() -> flowtrace::Result<LedgerStore> {
    let tx = |n: u64, ins: &[(&str, u64)], outs: &[(&str, u64)]| Transaction {
        txid: format!("{n:064x}"),
        height: n,
        timestamp: 1_454_284_800 + n as i64 * 600,
        inputs: ins.iter().map(|&(a, v)| TxSlot::new(a, v)).collect(),
        outputs: outs.iter().map(|&(a, v)| TxSlot::new(a, v)).collect(),
    };
    LedgerStore::from_transactions(vec![
        tx(1, &[], &[("victim", 60_000_000)]),
        tx(2, &[("victim", 60_000_000)], &[("ransom", 50_000_000), ("victim", 9_990_000)]),
        tx(3, &[("ransom", 50_000_000)], &[("exchange", 49_990_000)]),
    ])
}

fn main() -> flowtrace::Result<()> {
    let store = match std::env::args().nth(1) {
        Some(path) => ingest(path, LedgerFormat::Jsonl)?,
        None => demo()?,
    };
    println!("{} transactions, {} addresses", store.tx_count(), store.address_count());
    for tx in store.tx_indices().take(5) {
        let t = store.tx(tx);
        let fee = store.fee(tx).map_or("coinbase".to_string(), |f| format!("fee {f} sat"));
        println!("  {}.. height {} {fee}", &t.txid_hex()[..12], t.height);
    }
    for id in store.addr_ids().take(5) {
        let a = store.address(id);
        println!("  {a}: first seen {:?}, {} occurrences", store.first_seen(a), store.occurrences(id).len());
    }
    Ok(())
}
