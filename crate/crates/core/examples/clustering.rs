//! Co-spend clustering is transitive: A+B in one transaction and B+C in
//! another put A, B and C in one cluster.

use flowtrace::cluster::compute_partition;
use flowtrace::ledger::{LedgerStore, Transaction, TxSlot};

fn tx(n: u64, ins: &[&str], out: &str) -> Transaction {
    Transaction {
        txid: format!("{n:064x}"),
        height: n,
        timestamp: n as i64,
        inputs: ins.iter().map(|a| TxSlot::new(*a, 10)).collect(),
        outputs: vec![TxSlot::new(out, 5)],
    }
}

fn main() -> flowtrace::Result<()> {
    let store = LedgerStore::from_transactions(vec![tx(1, &["A", "B"], "D"), tx(2, &["B", "C"], "E"), tx(3, &["F"], "D")])?;
    let p = compute_partition(&store);
    println!("{} addresses, {} clusters", p.address_count(), p.cluster_count());
    for &c in p.clusters() {
        let names: Vec<&str> = p.members(c).iter().map(|&a| store.address(a)).collect();
        println!("  {} -> {:?}", store.address(c.representative()), names);
    }
    p.write_csv(&store, std::io::stdout()).expect("stdout");
    Ok(())
}
