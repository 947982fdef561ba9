//! Seed expansion over co-spend clusters, then the start-month filter
//! removing an address the operator used before the campaign.

use flowtrace::campaign::{expand, load_seeds_from, time_filter, write_dataset_summary};
use flowtrace::cluster::compute_partition;
use flowtrace::ledger::{LedgerStore, Transaction, TxSlot};

const JAN_2016: i64 = 1_451_606_400;
const FEB_2016: i64 = 1_454_284_800;

fn tx(n: u64, t: i64, ins: &[&str], outs: &[&str]) -> Transaction {
    Transaction {
        txid: format!("{n:064x}"),
        height: n,
        timestamp: t,
        inputs: ins.iter().map(|a| TxSlot::new(*a, 100)).collect(),
        outputs: outs.iter().map(|a| TxSlot::new(*a, 10)).collect(),
    }
}

fn main() -> flowtrace::Result<()> {
    let store = LedgerStore::from_transactions(vec![
        tx(1, JAN_2016, &[], &["old"]),
        tx(2, FEB_2016, &["v1"], &["pay1"]),
        tx(3, FEB_2016 + 60, &["v2"], &["pay2"]),
        tx(4, FEB_2016 + 3_600, &["pay1", "pay2", "old"], &["collector"]),
    ])?;
    let seeds = load_seeds_from("family,address,source\nLocky,pay1,ransomwaretracker\nLocky,nowhere,forum\n".as_bytes(), "seeds.csv")?;
    let partition = compute_partition(&store);
    let mut campaigns = Vec::new();
    for (family, addrs) in seeds.families() {
        let c = expand(family, addrs, &partition, &store);
        let c = time_filter(c, Some("2016-02".parse()?), &store);
        let names = |ids: &[flowtrace::ledger::AddrId]| ids.iter().map(|&a| store.address(a)).collect::<Vec<_>>();
        println!("{family}: expanded {:?}", names(&c.expanded));
        println!("{family}: filtered {:?}, dropped seeds {:?}", names(&c.expanded_tf), c.dropped);
        campaigns.push(c);
    }
    write_dataset_summary(&campaigns, std::io::stdout())
}
