//! Lower-bound impact of a family: everything its payment addresses
//! received, priced on the receipt day. Collectors are excluded, so money
//! moved from payment addresses into a collector is counted once.

use flowtrace::addrgraph::AddressGraph;
use flowtrace::campaign::{expand, time_filter};
use flowtrace::cluster::compute_partition;
use flowtrace::econ::{cumulative_series, family_impact, mean_payment, payment_set, Bucket, RateTable};
use flowtrace::flows::{build_outrel, key_addresses, IndegreeMode};
use flowtrace::ledger::{LedgerStore, Transaction, TxSlot};
use flowtrace::money::{btc_2dp, Rate};

const T0: i64 = 1_454_284_800;
const DAY: i64 = 86_400;

fn tx(n: u64, day: i64, ins: &[(&str, u64)], outs: &[(&str, u64)]) -> Transaction {
    Transaction {
        txid: format!("{n:064x}"),
        height: n,
        timestamp: T0 + day * DAY + n as i64,
        inputs: ins.iter().map(|&(a, v)| TxSlot::new(a, v)).collect(),
        outputs: outs.iter().map(|&(a, v)| TxSlot::new(a, v)).collect(),
    }
}

fn main() -> flowtrace::Result<()> {
    let btc = 100_000_000;
    let store = LedgerStore::from_transactions(vec![
        tx(1, 0, &[("v1", btc)], &[("p1", btc)]),
        tx(2, 1, &[("v2", 2 * btc)], &[("p2", 2 * btc)]),
        tx(3, 9, &[("p1", btc), ("p2", 2 * btc)], &[("collector", 3 * btc)]),
    ])?;
    let mut rates = RateTable::new();
    for (d, price) in [(0, "372.50"), (1, "380.00"), (9, "401.25")] {
        rates.insert(flowtrace::econ::utc_date(T0 + d * DAY), Rate::parse(price).unwrap())?;
    }
    let partition = compute_partition(&store);
    let graph = AddressGraph::build(&store, &rates)?;
    let seeds = vec!["p1".to_string()];
    let campaign = time_filter(expand("Demo", &seeds, &partition, &store), Some("2016-02".parse()?), &store);
    let keys = key_addresses(&build_outrel(&campaign, &graph, &store), IndegreeMode::DistinctSources);
    let set = payment_set(&campaign, &keys, &store, &rates)?;
    let impact = family_impact(&set);
    println!("{}: {} addresses, {} BTC, USD {}", impact.family, impact.addresses, btc_2dp(impact.total_sat), impact.total_usd.whole_dollars());
    println!("mean payment {:?}", mean_payment(&set.records, "Demo")?);
    for p in cumulative_series(&set.records, "Demo", Bucket::Day) {
        println!("  {} +{} = {}", p.bucket_start, p.period_usd.whole_dollars(), p.cumulative_usd.whole_dollars());
    }
    Ok(())
}
