//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any fails. Run with `cargo test --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{brute_components, partition_sets, random_ledger, T0};
use flowtrace::addrgraph::{attribute_flows, AddressGraph};
use flowtrace::campaign::{expand, time_filter, YearMonth};
use flowtrace::cluster::{build_cluster_graph, compute_partition};
use flowtrace::config::RunConfig;
use flowtrace::econ::{family_impact, market_summary, payment_set, utc_date, FamilyImpact, RateTable};
use flowtrace::flows::{build_outrel, key_addresses, IndegreeMode};
use flowtrace::ledger::{LedgerStore, Transaction, TxSlot};
use flowtrace::money::{Cents, Rate};
use flowtrace::pipeline::{analyze, run_report, Inputs, Options};
use flowtrace::testbed::{evaluate, generate, CampaignSpec, ExitProfile, Ransom, Testbed, TestbedSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const SCALE_ENV: &str = "FLOWTRACE_SCALE_DIR";
const SCALE_TXS: usize = 1_000_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn ym(s: &str) -> YearMonth {
    s.parse().expect("month")
}

fn tx(id: u32, t: i64, inputs: &[(&str, u64)], outputs: &[(&str, u64)]) -> Transaction {
    Transaction {
        txid: format!("{id:064x}"),
        height: id as u64,
        timestamp: t,
        inputs: inputs.iter().map(|&(a, v)| TxSlot::new(a, v)).collect(),
        outputs: outputs.iter().map(|&(a, v)| TxSlot::new(a, v)).collect(),
    }
}

fn inputs_of(tb: &Testbed) -> Inputs {
    Inputs {
        store: tb.store().expect("valid testbed"),
        seeds: tb.seed_book(),
        tags: tb.tag_set(),
        rates: tb.rates.clone(),
    }
}

fn opts(mode: IndegreeMode) -> Options {
    Options {
        indegree_mode: mode,
        bucket: Default::default(),
    }
}

fn planted_world(seed: u64) -> TestbedSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let mut families = Vec::new();
    for i in 0..n {
        let collectors = rng.gen_range(0..=5);
        let fan_in = rng.gen_range(2..=8);
        let victims = collectors * fan_in + rng.gen_range(0..=10) + 1;
        let mut f = CampaignSpec::new(&format!("F{i}"), victims, collectors, fan_in, ym("2016-01").add_months(rng.gen_range(0..10)));
        f.noise_fraction = rng.gen_range(0.0..0.5);
        families.push(f);
    }
    let mut spec = TestbedSpec::new(families);
    spec.background_txs = rng.gen_range(0..500);
    let big: Vec<String> = spec.families.iter().filter(|f| f.collectors >= 2).map(|f| f.family.clone()).collect();
    if big.len() >= 2 {
        spec.shared_collectors.push([big[0].clone(), big[1].clone()]);
    }
    spec
}

fn clustering_oracle() -> Outcome {
    let t = Instant::now();
    for seed in 0..100 {
        let txs = random_ledger(seed, 1_000, 500);
        let store = LedgerStore::from_transactions(txs.clone()).map_err(|e| e.to_string())?;
        if partition_sets(&compute_partition(&store), &store) != brute_components(&txs) {
            return Err(format!("ledger {seed} differs from brute-force components"));
        }
    }
    let took = t.elapsed();
    check(took < Duration::from_secs(10), format!("100 ledgers in {took:.2?}"))
}

fn key_address_fidelity() -> Outcome {
    let mut keys_checked = 0;
    for seed in 0..20 {
        let tb = generate(&planted_world(seed), seed).map_err(|e| e.to_string())?;
        let inputs = inputs_of(&tb);
        let a = analyze(&inputs, &tb.starts(), opts(IndegreeMode::DistinctSources)).map_err(|e| e.to_string())?;
        let scores = evaluate(&a.outcomes(&inputs.store), &tb.truth).map_err(|e| e.to_string())?;
        for s in scores {
            if !s.keys.is_perfect() {
                return Err(format!("world {seed} {}: keys {:?}", s.family, s.keys));
            }
        }
        keys_checked += tb.truth.families.values().map(|f| f.keys.len()).sum::<usize>();
    }

    // A pays X twice: one distinct source, so X is no key address.
    let txs = vec![
        tx(0, T0, &[], &[("A", 100_000)]),
        tx(1, T0 + 10, &[("A", 100_000)], &[("X", 40_000), ("A", 59_000)]),
        tx(2, T0 + 20, &[("A", 59_000)], &[("X", 50_000), ("A", 8_000)]),
    ];
    let store = LedgerStore::from_transactions(txs).map_err(|e| e.to_string())?;
    let partition = compute_partition(&store);
    let mut rates = RateTable::new();
    rates.insert(utc_date(T0), Rate(400_000_000)).unwrap();
    let graph = AddressGraph::build(&store, &rates).map_err(|e| e.to_string())?;
    let seeds = ["A".to_string()];
    let c = time_filter(expand("T", seeds.iter(), &partition, &store), None, &store);
    let g = build_outrel(&c, &graph, &store);
    let x = store.addr_id("X").unwrap();
    let by_source = g.indegrees(IndegreeMode::DistinctSources).get(&x).copied();
    let by_tx = g.indegrees(IndegreeMode::DistinctTxs).get(&x).copied();
    let keys = key_addresses(&g, IndegreeMode::DistinctSources);
    check(
        by_source == Some(1) && keys.is_empty() && by_tx == Some(2),
        format!("{keys_checked} planted keys recovered over 20 worlds; A-pays-X-twice indegree {by_source:?}, per-tx {by_tx:?}"),
    )
}

fn double_counting() -> Outcome {
    let mut checked = 0;
    for seed in 0..10u64 {
        let collectors = 2 + seed as usize % 4;
        let fan_in = 3 + seed as usize % 5;
        let mut f = CampaignSpec::new("Full", collectors * fan_in, collectors, fan_in, ym("2016-03"));
        f.noise_fraction = 0.2;
        f.exit = ExitProfile {
            exchange: 0.5,
            gambling: 0.0,
            mixer: 0.3,
        };
        if seed % 2 == 0 {
            f.ransom = Ransom::Fixed { sat: 123_456_789 };
        }
        let mut spec = TestbedSpec::new(vec![f]);
        spec.background_txs = 200;
        let tb = generate(&spec, seed).map_err(|e| e.to_string())?;
        let truth = &tb.truth.families["Full"];
        let inputs = inputs_of(&tb);
        let a = analyze(&inputs, &tb.starts(), opts(IndegreeMode::DistinctSources)).map_err(|e| e.to_string())?;
        let fam = &a.families["Full"];
        let impact = family_impact(&fam.payments);
        if impact.total_sat != truth.ransom_sat || impact.total_usd != truth.ransom_usd {
            return Err(format!("seed {seed}: {} sat against planted {}", impact.total_sat, truth.ransom_sat));
        }
        let naive = payment_set(&fam.campaign, &[], &inputs.store, &inputs.rates).map_err(|e| e.to_string())?;
        let inflated = family_impact(&naive).total_sat;
        if inflated != truth.ransom_sat + truth.consolidated_sat || impact.total_sat == inflated {
            return Err(format!(
                "seed {seed}: collector-inclusive total {inflated}, expected {} + {}",
                truth.ransom_sat, truth.consolidated_sat
            ));
        }
        checked += 1;
    }
    Ok(format!("{checked} fully consolidated campaigns exact to the satoshi, collector-inclusive totals rejected"))
}

fn market_arithmetic() -> Outcome {
    const FAMILIES: [(&str, u64); 15] = [
        ("Locky", 7_834_737),
        ("CryptXXX", 1_878_696),
        ("DMALockerv3", 1_500_630),
        ("SamSam", 599_687),
        ("CryptoLocker", 519_991),
        ("GlobeImposter", 116_014),
        ("WannaCry", 102_703),
        ("CryptoTorLocker2015", 67_221),
        ("APT", 31_971),
        ("NoobCrypt", 25_080),
        ("Globe", 24_319),
        ("Globev3", 16_008),
        ("EDA2", 15_111),
        ("NotPetya", 11_458),
        ("Razy", 8_073),
    ];
    const MARKET: u64 = 12_768_536;
    let t = Instant::now();
    let listed: u64 = FAMILIES.iter().map(|f| f.1).sum();
    let impact = |family: &str, usd: u64| FamilyImpact {
        family: family.into(),
        addresses: 0,
        payments: 0,
        total_sat: 0,
        total_usd: Cents::from_dollars(usd),
        empty: false,
    };
    let mut impacts: Vec<FamilyImpact> = FAMILIES.iter().map(|&(f, usd)| impact(f, usd)).collect();
    impacts.push(impact("other", MARKET - listed));
    let r = market_summary(&impacts).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    // independent arithmetic
    let mut sorted: Vec<u64> = FAMILIES.iter().map(|f| f.1).collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let top1 = sorted[0] as f64 / MARKET as f64;
    let top3 = sorted[..3].iter().sum::<u64>() as f64 / MARKET as f64;
    let (got1, got3) = (r.top_share(1), r.top_share(3));
    check(
        r.total_usd.whole_dollars() == MARKET
            && (got1 - top1).abs() < 1e-12
            && (got3 - top3).abs() < 1e-12
            && got1 > 0.5
            && (got3 - 0.86).abs() <= 0.02
            && took < Duration::from_secs(1),
        format!("top {:.2}%, top-3 {:.2}% of USD {}, in {took:.2?}", got1 * 100.0, got3 * 100.0, r.total_usd.whole_dollars()),
    )
}

fn transitivity_example() -> Outcome {
    let txs = vec![
        tx(0, T0, &[], &[("A", 50), ("B", 50), ("C", 50)]),
        tx(1, T0 + 1, &[("A", 50), ("B", 50)], &[("D", 90)]),
        tx(2, T0 + 2, &[("B", 10), ("C", 50)], &[("E", 50)]),
    ];
    let store = LedgerStore::from_transactions(txs).map_err(|e| e.to_string())?;
    let p = compute_partition(&store);
    let sets = partition_sets(&p, &store);
    let abc: BTreeSet<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let with_a: Vec<_> = sets.iter().filter(|s| s.contains("A")).collect();
    check(
        with_a == vec![&abc] && sets.len() == 3,
        format!("{} clusters, A's cluster {:?}", sets.len(), with_a),
    )
}

fn change_removal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pool: Vec<String> = (0..40).map(|i| format!("c{i:02}")).collect();
    let mut txs = Vec::with_capacity(10_000);
    let mut mixed = 0;
    for i in 0..10_000u32 {
        let n_in = rng.gen_range(1..=4);
        let inputs: Vec<TxSlot> = (0..n_in)
            .map(|_| TxSlot::new(pool.choose(&mut rng).unwrap().clone(), rng.gen_range(1..1_000_000)))
            .collect();
        let mut left: u64 = inputs.iter().map(|s| s.value).sum();
        let mut outputs: Vec<TxSlot> = (0..rng.gen_range(0..=3))
            .map(|_| {
                let v = rng.gen_range(0..=left / 2);
                left -= v;
                TxSlot::new(pool.choose(&mut rng).unwrap().clone(), v)
            })
            .collect();
        // always pay back to one of the spending addresses
        let back = inputs.choose(&mut rng).unwrap().address.clone();
        outputs.insert(rng.gen_range(0..=outputs.len()), TxSlot::new(back, rng.gen_range(0..=left)));
        if outputs.iter().any(|o| !inputs.iter().any(|s| s.address == o.address)) {
            mixed += 1;
        }
        txs.push(Transaction {
            txid: format!("{i:064x}"),
            height: i as u64,
            timestamp: T0 + i as i64,
            inputs,
            outputs,
        });
    }
    let store = LedgerStore::from_transactions(txs).map_err(|e| e.to_string())?;
    for t in store.tx_indices() {
        if let Some(f) = attribute_flows(&store, t).iter().find(|f| f.src == f.dst) {
            return Err(format!("self-edge on {}", store.address(f.src)));
        }
    }
    let mut rates = RateTable::new();
    for d in 0..=1 {
        rates.insert(utc_date(T0 + d * 86_400), Rate(400_000_000)).unwrap();
    }
    let g = AddressGraph::build(&store, &rates).map_err(|e| e.to_string())?;
    let selfs = g.edges().iter().filter(|e| e.src == e.dst).count();
    check(selfs == 0, format!("10000 transactions paying an input address, {mixed} with other payees too; 0 self-edges"))
}

fn conservation() -> Outcome {
    let mut txs_checked = 0usize;
    for seed in 0..8 {
        let tb = generate(&planted_world(100 + seed), seed).map_err(|e| e.to_string())?;
        let inputs = inputs_of(&tb);
        let store = &inputs.store;
        let a = analyze(&inputs, &tb.starts(), opts(IndegreeMode::DistinctSources)).map_err(|e| e.to_string())?;
        let mut expected_total = 0u64;
        for t in store.tx_indices() {
            let ins: BTreeSet<_> = store.inputs(t).iter().map(|s| s.addr).collect();
            let paid: u64 = if ins.is_empty() {
                0
            } else {
                store.outputs(t).iter().filter(|o| !ins.contains(&o.addr)).map(|o| o.value).sum()
            };
            let flowed: u64 = attribute_flows(store, t).iter().map(|f| f.sat).sum();
            if flowed != paid {
                return Err(format!("world {seed}: tx {} attributes {flowed} of {paid}", store.tx(t).txid_hex()));
            }
            expected_total += paid;
            txs_checked += 1;
        }
        let cg = build_cluster_graph(&a.partition, &a.graph);
        if a.graph.total_sat() != expected_total || cg.total_sat() != expected_total {
            return Err(format!(
                "world {seed}: outputs {expected_total}, address graph {}, cluster graph {}",
                a.graph.total_sat(),
                cg.total_sat()
            ));
        }
        let usd_addr: u128 = a.graph.edges().iter().map(|e| e.value_usd.0).sum();
        let usd_cluster: u128 = cg.edges().iter().map(|e| e.value_usd.0).sum();
        if usd_addr != usd_cluster {
            return Err(format!("world {seed}: USD totals differ between graphs"));
        }
        for (family, f) in &a.families {
            let end = f.series.last().map(|p| p.cumulative_usd).unwrap_or_default();
            let summed = f.payments.records.iter().map(|r| r.amount_usd.0).sum::<u64>();
            if end != f.impact.total_usd || summed != f.impact.total_usd.0 {
                return Err(format!("world {seed} {family}: series ends at {end:?}, impact {:?}", f.impact.total_usd));
            }
        }
    }
    Ok(format!("{txs_checked} testbed transactions conserve outputs; graph and series totals agree"))
}

fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p).unwrap())));
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let tb = generate(&TestbedSpec::demo(), 8).map_err(|e| e.to_string())?;
    let cfg_path = tb.write_to(tmp.path()).map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let mut c = RunConfig::load(&cfg_path).map_err(|e| e.to_string())?;
        c.out = tmp.path().join(run);
        let r = run_report(&c).map_err(|e| e.to_string())?;
        if r.cached {
            return Err("second run was served from cache".into());
        }
        trees.push(hash_tree(&c.out));
    }
    check(trees[0] == trees[1] && trees[0].len() > 15, format!("{} artifacts byte-identical across runs", trees[0].len()))
}

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Runs in a fresh process so its peak memory excludes generation.
fn scale_child(config: &Path) {
    let t = Instant::now();
    let c = RunConfig::load(config).expect("config");
    let r = run_report(&c).expect("report");
    let secs = t.elapsed().as_secs_f64();
    println!("elapsed {secs:.3} peak_kib {} families {}", peak_rss_kib().unwrap_or(0), r.summary["families"].as_array().map_or(0, Vec::len));
}

fn throughput() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = TestbedSpec::demo();
    spec.background_addresses = 400_000;
    let t = Instant::now();
    let planted = generate(&spec, 9).map_err(|e| e.to_string())?.transactions.len();
    spec.background_txs += SCALE_TXS - planted;
    let tb = generate(&spec, 9).map_err(|e| e.to_string())?;
    let n = tb.transactions.len();
    let config = tb.write_to(tmp.path()).map_err(|e| e.to_string())?;
    drop(tb);
    let gen_time = t.elapsed();
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let out = Command::new(exe).env(SCALE_ENV, &config).output().map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() {
        return Err(format!("child failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let field = |name: &str| -> Option<f64> {
        let mut it = text.split_whitespace();
        it.position(|w| w == name)?;
        it.next()?.parse().ok()
    };
    let (Some(secs), Some(kib)) = (field("elapsed"), field("peak_kib")) else {
        return Err(format!("unreadable child output: {text}"));
    };
    let gib = kib / (1024.0 * 1024.0);
    check(
        n >= SCALE_TXS && secs < 120.0 && kib > 0.0 && gib < 4.0,
        format!("{n} txs: ingest+cluster+report {secs:.1}s, peak {gib:.2} GiB (generation {gen_time:.1?})"),
    )
}

fn time_filter_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let tb = generate(&TestbedSpec::demo(), 3).map_err(|e| e.to_string())?;
    let mut ledgers = vec![(tb.store().map_err(|e| e.to_string())?, tb.seed_book())];
    for seed in 0..20 {
        // spread random ledgers over several months
        let mut txs = random_ledger(seed, 400, 150);
        for (i, t) in txs.iter_mut().enumerate() {
            t.timestamp = T0 + i as i64 * 40_000;
        }
        let store = LedgerStore::from_transactions(txs).map_err(|e| e.to_string())?;
        let addrs: Vec<String> = store.addr_ids().map(|a| store.address(a).to_string()).collect();
        let records = (0..3).flat_map(|f| {
            addrs
                .choose_multiple(&mut rng, 4)
                .map(move |a| flowtrace::campaign::SeedRecord {
                    family: format!("R{f}"),
                    address: a.clone(),
                    source: "random".into(),
                })
                .collect::<Vec<_>>()
        });
        let book = flowtrace::campaign::SeedBook::from_records(records.collect::<Vec<_>>());
        ledgers.push((store, book));
    }
    let mut pairs = 0;
    for (store, book) in &ledgers {
        let p = compute_partition(store);
        for (family, seeds) in book.families() {
            let base = expand(family, seeds.iter(), &p, store);
            for _ in 0..25 {
                let a = ym("2015-10").add_months(rng.gen_range(0..24));
                let b = a.add_months(rng.gen_range(0..12));
                let early = time_filter(base.clone(), Some(a), store).expanded_tf;
                let late = time_filter(base.clone(), Some(b), store).expanded_tf;
                let early_set: BTreeSet<_> = early.iter().collect();
                if late.len() > early.len() || !late.iter().all(|x| early_set.contains(x)) {
                    return Err(format!("{family}: {b} keeps {} addresses, {a} keeps {}", late.len(), early.len()));
                }
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} random start pairs, later start never grows expanded_tf"))
}

fn main() {
    if let Some(config) = std::env::var_os(SCALE_ENV) {
        scale_child(Path::new(&config));
        return;
    }
    let criteria: [Criterion; 10] = [
        ("clustering oracle equivalence", clustering_oracle),
        ("key address fidelity", key_address_fidelity),
        ("double-counting exclusion", double_counting),
        ("market share arithmetic", market_arithmetic),
        ("co-spend transitivity example", transitivity_example),
        ("change removal", change_removal),
        ("conservation", conservation),
        ("determinism", determinism),
        ("desk-scale throughput", throughput),
        ("time-filter monotonicity", time_filter_monotone),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
