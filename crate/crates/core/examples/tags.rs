//! A tag on one address labels its whole cluster.

use flowtrace::attribution::{attribute_clusters, load_tags_from};
use flowtrace::cluster::compute_partition;
use flowtrace::ledger::{LedgerStore, Transaction, TxSlot};

const TAGS: &str = "\
address,label,category,source
hot1,BTC-e.com,exchange,walletexplorer
hot1,BTC-e.com,exchange,blockchain.info
dice,SatoshiDice,casino,walletexplorer
ghost,Helix,mixer,forum
";

fn main() -> flowtrace::Result<()> {
    let tx = Transaction {
        txid: "01".repeat(32),
        height: 1,
        timestamp: 0,
        inputs: vec![TxSlot::new("deposit", 5), TxSlot::new("hot1", 5), TxSlot::new("dice", 1)],
        outputs: vec![TxSlot::new("cold", 10)],
    };
    let store = LedgerStore::from_transactions(vec![tx])?;
    let partition = compute_partition(&store);
    let tags = load_tags_from(TAGS.as_bytes(), "tags.csv")?;
    for w in &tags.warnings {
        println!("warning: {w}");
    }
    let attr = attribute_clusters(&tags, &partition, &store);
    for a in ["deposit", "cold"] {
        let labels: Vec<&str> = attr.tags_for_address(&store, &partition, a).iter().map(|t| t.label.as_str()).collect();
        println!("{a}: {labels:?}");
    }
    attr.write_orphans(std::io::stdout())?;
    Ok(())
}
