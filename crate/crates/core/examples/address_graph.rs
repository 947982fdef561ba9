//! Value attribution on a multi-input transaction and the resulting
//! address graph. Explicit change never becomes an edge.

use flowtrace::addrgraph::{attribute_flows, AddressGraph};
use flowtrace::econ::RateTable;
use flowtrace::ledger::{LedgerStore, Transaction, TxSlot};
use flowtrace::money::{btc_8dp, Rate};

fn main() -> flowtrace::Result<()> {
    let day = 1_451_606_400;
    let tx = Transaction {
        txid: "ab".repeat(32),
        height: 1,
        timestamp: day,
        inputs: vec![TxSlot::new("A", 70_000_000), TxSlot::new("B", 30_000_000)],
        outputs: vec![TxSlot::new("X", 80_000_000), TxSlot::new("A", 19_990_000)],
    };
    let store = LedgerStore::from_transactions(vec![tx])?;
    let mut rates = RateTable::new();
    rates.insert(flowtrace::econ::utc_date(day), Rate::parse("434.46").unwrap())?;

    let idx = store.tx_indices().next().unwrap();
    for f in attribute_flows(&store, idx) {
        println!("{} -> {}: {} BTC", store.address(f.src), store.address(f.dst), btc_8dp(f.sat));
    }

    let graph = AddressGraph::build(&store, &rates)?;
    let mut out = std::io::stdout();
    graph.write_csv(&store, &mut out).expect("stdout");
    for (dst, e) in graph.out_neighbors(&store, "B") {
        println!("B pays {dst} in {} tx, USD {}", e.tx_count, e.value_usd.to_cents().to_decimal_string());
    }
    Ok(())
}
