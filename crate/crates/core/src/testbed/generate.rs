use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::{CampaignSpec, Ransom, TestbedSpec};
use crate::attribution::{Category, Tag, TagSet};
use crate::campaign::{SeedBook, SeedRecord, YearMonth};
use crate::config::RunConfig;
use crate::econ::{utc_date, RateTable};
use crate::error::{Error, Result};
use crate::flows::IndegreeMode;
use crate::ledger::{LedgerStore, Transaction, TxSlot};
use crate::money::{Cents, Rate};

const DAY: i64 = 86_400;
const HOUR: i64 = 3_600;
/// Value the operator wallet contributes to each transaction it joins.
const OPERATOR_INPUT: u64 = 50_000;
const FEE: u64 = 1_000;
const SOURCE: &str = "testbed";

/// What the generator planted for one family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyTruth {
    pub family: String,
    pub start: YearMonth,
    pub payment_addresses: BTreeSet<String>,
    pub collectors: BTreeSet<String>,
    /// Collectors plus, with two or more collectors, every exit receiver.
    pub keys: BTreeSet<String>,
    /// Exit receivers inside tagged service clusters.
    pub exits: BTreeMap<String, Category>,
    pub clusters: BTreeSet<BTreeSet<String>>,
    pub expanded: BTreeSet<String>,
    pub expanded_tf: BTreeSet<String>,
    pub ransom_sat: u64,
    pub ransom_usd: Cents,
    /// Total received by collectors.
    pub consolidated_sat: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedCollector {
    pub families: [String; 2],
    pub address: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub families: BTreeMap<String, FamilyTruth>,
    pub shared: Vec<SharedCollector>,
}

/// A generated ledger with its side files and ground truth.
#[derive(Debug, Clone)]
pub struct Testbed {
    pub spec: TestbedSpec,
    pub seed: u64,
    /// In ledger order.
    pub transactions: Vec<Transaction>,
    pub seeds: Vec<SeedRecord>,
    pub tags: Vec<Tag>,
    pub rates: RateTable,
    pub truth: GroundTruth,
}

/// File names written by [`Testbed::write_to`].
pub mod files {
    pub const LEDGER: &str = "ledger.jsonl";
    pub const SEEDS: &str = "seeds.csv";
    pub const TAGS: &str = "tags.csv";
    pub const RATES: &str = "rates.csv";
    pub const TRUTH: &str = "ground_truth.json";
    pub const SPEC: &str = "testbed.toml";
    pub const CONFIG: &str = "flowtrace.toml";
}

impl Testbed {
    pub fn store(&self) -> Result<LedgerStore> {
        LedgerStore::from_transactions(self.transactions.clone())
    }

    pub fn seed_book(&self) -> SeedBook {
        SeedBook::from_records(self.seeds.iter().cloned())
    }

    pub fn tag_set(&self) -> TagSet {
        TagSet::from_tags(self.tags.iter().cloned())
    }

    pub fn starts(&self) -> BTreeMap<String, YearMonth> {
        self.spec.families.iter().map(|f| (f.family.clone(), f.start)).collect()
    }

    /// Config pointing at the files [`Testbed::write_to`] produces, with
    /// paths relative to the output directory.
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            ledger: files::LEDGER.into(),
            seeds: files::SEEDS.into(),
            tags: Some(files::TAGS.into()),
            rates: files::RATES.into(),
            out: "report".into(),
            starts: self.starts(),
            indegree_mode: IndegreeMode::DistinctSources,
            bucket: Default::default(),
            interpolate_rates: false,
        }
    }

    /// Writes ledger, seeds, tags, rates, ground truth, the spec and a run
    /// config into `dir`. Returns the config path.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = |name: &str| dir.join(name);

        let ledger = path(files::LEDGER);
        let io = |e| Error::io(&ledger, e);
        let mut w = BufWriter::new(std::fs::File::create(&ledger).map_err(io)?);
        for tx in &self.transactions {
            w.write_all(tx.to_json_line().as_bytes()).map_err(io)?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)?;

        let mut seeds = csv::Writer::from_path(path(files::SEEDS))?;
        seeds.write_record(["family", "address", "source"])?;
        for s in &self.seeds {
            seeds.write_record([&s.family, &s.address, &s.source])?;
        }
        seeds.flush().map_err(csv::Error::from)?;

        let mut tags = csv::Writer::from_path(path(files::TAGS))?;
        tags.write_record(["address", "label", "category", "source"])?;
        for t in &self.tags {
            tags.write_record([&t.address, &t.label, t.category.as_str(), &t.source])?;
        }
        tags.flush().map_err(csv::Error::from)?;

        write_file(&path(files::RATES), self.rates.to_csv().as_bytes())?;
        let mut truth = serde_json::to_vec_pretty(&self.truth)?;
        truth.push(b'\n');
        write_file(&path(files::TRUTH), &truth)?;
        let spec = format!("# seed = {}\n{}", self.seed, self.spec.to_toml());
        write_file(&path(files::SPEC), spec.as_bytes())?;
        let config = path(files::CONFIG);
        write_file(&config, self.run_config().to_toml().as_bytes())?;
        Ok(config)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

struct Event {
    timestamp: i64,
    inputs: Vec<TxSlot>,
    outputs: Vec<TxSlot>,
}

struct Gen {
    rng: ChaCha8Rng,
    seed: u64,
    next_addr: u64,
    events: Vec<Event>,
}

impl Gen {
    fn hash(&self, kind: &str, n: u64) -> String {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(kind.as_bytes())
            .chain_update(n.to_le_bytes())
            .finalize();
        hex::encode(digest)
    }

    fn addr(&mut self) -> String {
        self.next_addr += 1;
        format!("1{}", &self.hash("addr", self.next_addr)[..33])
    }

    fn push(&mut self, timestamp: i64, inputs: Vec<TxSlot>, outputs: Vec<TxSlot>) {
        self.events.push(Event {
            timestamp,
            inputs,
            outputs,
        });
    }

    fn coinbase(&mut self, timestamp: i64, to: &str, value: u64) {
        self.push(timestamp, vec![], vec![TxSlot::new(to, value)]);
    }

    fn between(&mut self, lo: i64, hi: i64) -> i64 {
        if hi <= lo {
            lo
        } else {
            self.rng.gen_range(lo..hi)
        }
    }

    fn ransom(&mut self, r: Ransom) -> u64 {
        match r {
            Ransom::Fixed { sat } => sat,
            Ransom::Uniform { min_sat, max_sat } => self.rng.gen_range(min_sat..=max_sat),
        }
    }
}

struct Service {
    category: Category,
    label: &'static str,
    hot: String,
    deposits: Vec<(String, u64)>,
}

/// Generates a synthetic world. Identical `(spec, seed)` pairs give
/// identical output.
pub fn generate(spec: &TestbedSpec, seed: u64) -> Result<Testbed> {
    spec.validate()?;
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        seed,
        next_addr: 0,
        events: Vec::new(),
    };

    let earliest = spec
        .families
        .iter()
        .map(|f| f.start.first_instant())
        .min()
        .unwrap_or(YearMonth::new(2016, 1).expect("valid month").first_instant())
        - 45 * DAY;

    let mut services: Vec<Service> = [
        (Category::Exchange, "SynthExchange"),
        (Category::Gambling, "SynthDice"),
        (Category::Mixer, "SynthMixer"),
    ]
    .into_iter()
    .map(|(category, label)| Service {
        category,
        label,
        hot: g.addr(),
        deposits: Vec::new(),
    })
    .collect();
    for s in &services {
        g.coinbase(earliest, &s.hot, 10 * OPERATOR_INPUT);
    }

    let shared: Vec<SharedCollector> = spec
        .shared_collectors
        .iter()
        .map(|pair| SharedCollector {
            families: pair.clone(),
            address: g.addr(),
        })
        .collect();

    let mut seeds = Vec::new();
    let mut truths = BTreeMap::new();
    let mut payments: Vec<(String, i64, u64)> = Vec::new();
    for f in &spec.families {
        let mine: Vec<String> = shared
            .iter()
            .filter(|s| s.families.contains(&f.family))
            .map(|s| s.address.clone())
            .collect();
        let truth = plant_family(&mut g, f, &mine, &mut services, &mut seeds, &mut payments)?;
        truths.insert(f.family.clone(), truth);
    }

    let mut latest = g.events.iter().map(|e| e.timestamp).max().unwrap_or(earliest);
    if spec.background_txs > 0 {
        let pool: Vec<String> = (0..spec.background_addresses).map(|_| g.addr()).collect();
        for _ in 0..spec.background_txs {
            let t = g.between(earliest, latest + 1);
            let (ins, outs) = background_tx(&mut g, &pool);
            g.push(t, ins, outs);
        }
    }
    latest += DAY;
    for s in &services {
        if s.deposits.is_empty() {
            continue;
        }
        let mut inputs = vec![TxSlot::new(&s.hot, OPERATOR_INPUT)];
        inputs.extend(s.deposits.iter().map(|(a, v)| TxSlot::new(a, *v)));
        let total: u64 = inputs.iter().map(|s| s.value).sum();
        let cold = g.addr();
        g.push(latest, inputs, vec![TxSlot::new(cold, total - FEE)]);
    }

    let rates = random_walk_rates(&mut g.rng, earliest, latest);
    for (family, t, sat) in &payments {
        let rate = rates.rate_at(*t)?;
        let truth = truths.get_mut(family).expect("family planted");
        truth.ransom_usd += rate.value_of(*sat).to_cents();
    }

    let mut tags: Vec<Tag> = services
        .iter()
        .map(|s| Tag {
            address: s.hot.clone(),
            label: s.label.to_string(),
            category: s.category,
            source: SOURCE.into(),
        })
        .collect();
    tags.push(Tag {
        address: g.addr(),
        label: "DormantService".into(),
        category: Category::Other,
        source: SOURCE.into(),
    });

    let mut events = std::mem::take(&mut g.events);
    events.sort_by_key(|e| e.timestamp);
    let transactions = events
        .into_iter()
        .enumerate()
        .map(|(i, e)| Transaction {
            txid: g.hash("tx", i as u64),
            height: i as u64 + 1,
            timestamp: e.timestamp,
            inputs: e.inputs,
            outputs: e.outputs,
        })
        .collect();

    Ok(Testbed {
        spec: spec.clone(),
        seed,
        transactions,
        seeds,
        tags,
        rates,
        truth: GroundTruth {
            families: truths,
            shared,
        },
    })
}

fn plant_family(
    g: &mut Gen,
    f: &CampaignSpec,
    shared: &[String],
    services: &mut [Service],
    seeds: &mut Vec<SeedRecord>,
    payments: &mut Vec<(String, i64, u64)>,
) -> Result<FamilyTruth> {
    let start = f.start.first_instant();
    let seed_record = |address: &String| SeedRecord {
        family: f.family.clone(),
        address: address.clone(),
        source: SOURCE.into(),
    };

    // Operator wallet and pre-campaign addresses co-spent with it.
    let operator = g.addr();
    let t = g.between(start - 40 * DAY, start - 39 * DAY);
    g.coinbase(t, &operator, OPERATOR_INPUT);
    let mut noise = BTreeSet::new();
    for _ in 0..f.noise_addresses() {
        let a = g.addr();
        let funded = g.between(start - 35 * DAY, start - 25 * DAY);
        g.coinbase(funded, &a, 20_000);
        let spent = g.between(funded + HOUR, funded + 5 * DAY);
        let sink = g.addr();
        g.push(
            spent,
            vec![TxSlot::new(&a, 20_000), TxSlot::new(&operator, OPERATOR_INPUT)],
            vec![TxSlot::new(sink, 20_000 + OPERATOR_INPUT - FEE)],
        );
        noise.insert(a);
    }

    // Victims pay fresh addresses.
    let mut paid: Vec<(String, i64, u64)> = Vec::with_capacity(f.victims);
    for _ in 0..f.victims {
        let victim = g.addr();
        let pay = g.addr();
        let r = g.ransom(f.ransom);
        let t = g.between(start, start + f.campaign_days as i64 * DAY);
        let funded = g.between(t - 2 * DAY, t - HOUR);
        g.coinbase(funded, &victim, r + FEE);
        g.push(t, vec![TxSlot::new(&victim, r + FEE)], vec![TxSlot::new(&pay, r)]);
        payments.push((f.family.clone(), t, r));
        paid.push((pay, t, r));
    }

    let grouped = f.collectors * f.fan_in;
    let picks: Vec<usize> = sample(&mut g.rng, f.victims, grouped).into_vec();
    let mut in_group = vec![false; f.victims];
    for &i in &picks {
        in_group[i] = true;
    }

    let mut truth = FamilyTruth {
        family: f.family.clone(),
        start: f.start,
        payment_addresses: paid.iter().map(|p| p.0.clone()).collect(),
        collectors: BTreeSet::new(),
        keys: BTreeSet::new(),
        exits: BTreeMap::new(),
        clusters: BTreeSet::new(),
        expanded: BTreeSet::new(),
        expanded_tf: BTreeSet::new(),
        ransom_sat: paid.iter().map(|p| p.2).sum(),
        ransom_usd: Cents(0),
        consolidated_sat: 0,
    };

    for (i, p) in paid.iter().enumerate() {
        if !in_group[i] {
            seeds.push(seed_record(&p.0));
            truth.clusters.insert(BTreeSet::from([p.0.clone()]));
        }
    }

    if f.collectors > 0 {
        let mut collectors: Vec<(String, u64)> = Vec::new();
        let mut last_consolidation = start;
        for group in picks.chunks(f.fan_in) {
            let members: Vec<&(String, i64, u64)> = group.iter().map(|&i| &paid[i]).collect();
            let pick = g.rng.gen_range(0..members.len());
            seeds.push(seed_record(&members[pick].0));
            let ready = members.iter().map(|m| m.1).max().expect("fan-in ≥ 2");
            let t = g.between(ready + HOUR, ready + DAY);
            last_consolidation = last_consolidation.max(t);
            let collector = g.addr();
            let mut inputs: Vec<TxSlot> = members.iter().map(|m| TxSlot::new(&m.0, m.2)).collect();
            inputs.push(TxSlot::new(&operator, OPERATOR_INPUT));
            let value = inputs.iter().map(|s| s.value).sum::<u64>() - FEE;
            g.push(t, inputs, vec![TxSlot::new(&collector, value)]);
            collectors.push((collector, value));
        }
        truth.consolidated_sat = collectors.iter().map(|c| c.1).sum();
        truth.collectors = collectors.iter().map(|c| c.0.clone()).collect();

        let t = g.between(last_consolidation + DAY, last_consolidation + 2 * DAY);
        let receivers = plant_exit(g, f, t, &operator, &collectors, shared, services)?;
        truth.keys.extend(truth.collectors.iter().cloned());
        if f.collectors >= 2 {
            truth.keys.extend(receivers.iter().map(|r| r.0.clone()));
        }
        truth.exits = receivers.into_iter().filter_map(|(a, c)| c.map(|c| (a, c))).collect();

        let mut main: BTreeSet<String> = noise;
        main.insert(operator);
        main.extend(truth.collectors.iter().cloned());
        main.extend(picks.iter().map(|&i| paid[i].0.clone()));
        truth.clusters.insert(main);
    }

    truth.expanded = truth.clusters.iter().flatten().cloned().collect();
    truth.expanded_tf = truth
        .payment_addresses
        .iter()
        .chain(&truth.collectors)
        .cloned()
        .collect();
    Ok(truth)
}

/// Emits the exit transaction spending every collector and returns its
/// receivers, each with the category of the service it belongs to.
///
/// Every receiver gets at least one satoshi from every collector: an
/// output below `total_in / smallest_collector` is folded into another.
fn plant_exit(
    g: &mut Gen,
    f: &CampaignSpec,
    t: i64,
    operator: &str,
    collectors: &[(String, u64)],
    shared: &[String],
    services: &mut [Service],
) -> Result<Vec<(String, Option<Category>)>> {
    let mut inputs: Vec<TxSlot> = collectors.iter().map(|c| TxSlot::new(&c.0, c.1)).collect();
    inputs.push(TxSlot::new(operator, OPERATOR_INPUT));
    let total_in: u64 = inputs.iter().map(|s| s.value).sum();
    let smallest = collectors.iter().map(|c| c.1).min().expect("at least one collector");
    let floor = total_in.div_ceil(smallest);
    let total_out = total_in - FEE;

    let mut outputs: Vec<(String, u64, Option<Category>)> = Vec::new();
    let mut left = total_out;
    for s in shared {
        let v = (total_out / 20).max(floor);
        if v > left / 2 {
            return Err(Error::InfeasibleSpec(format!(
                "{}: too many shared collectors for its exit volume",
                f.family
            )));
        }
        outputs.push((s.clone(), v, None));
        left -= v;
    }
    let budget = left;
    for (service, fraction) in services.iter_mut().zip([f.exit.exchange, f.exit.gambling, f.exit.mixer]) {
        let v = (budget as f64 * fraction).floor() as u64;
        if v < floor || v > left {
            continue;
        }
        let deposit = g.addr();
        service.deposits.push((deposit.clone(), v));
        outputs.push((deposit, v, Some(service.category)));
        left -= v;
    }
    if left >= floor {
        outputs.push((g.addr(), left, None));
    } else if left > 0 {
        match outputs.iter_mut().max_by_key(|o| o.1) {
            Some(o) => {
                o.1 += left;
                if let Some(category) = o.2 {
                    let s = services.iter_mut().find(|s| s.category == category).expect("service exists");
                    s.deposits.last_mut().expect("deposit recorded").1 += left;
                }
            }
            None => {
                return Err(Error::InfeasibleSpec(format!("{}: exit volume too small", f.family)));
            }
        }
    }
    let slots = outputs.iter().map(|o| TxSlot::new(&o.0, o.1)).collect();
    g.push(t, inputs, slots);
    Ok(outputs.into_iter().map(|o| (o.0, o.2)).collect())
}

fn background_tx(g: &mut Gen, pool: &[String]) -> (Vec<TxSlot>, Vec<TxSlot>) {
    let n_in = g.rng.gen_range(1..=3usize).min(pool.len());
    let n_out = g.rng.gen_range(1..=3usize).min(pool.len());
    let inputs: Vec<TxSlot> = sample(&mut g.rng, pool.len(), n_in)
        .into_iter()
        .map(|i| TxSlot::new(&pool[i], g.rng.gen_range(10_000..50_000_000)))
        .collect();
    let total: u64 = inputs.iter().map(|s| s.value).sum::<u64>() - FEE;
    let picks = sample(&mut g.rng, pool.len(), n_out).into_vec();
    let mut left = total;
    let mut outputs = Vec::with_capacity(n_out);
    for (k, &i) in picks.iter().enumerate() {
        let v = if k + 1 == n_out { left } else { g.rng.gen_range(1..=left / 2) };
        left -= v;
        outputs.push(TxSlot::new(&pool[i], v));
    }
    (inputs, outputs)
}

/// Daily closes from a bounded multiplicative random walk, in whole cents.
fn random_walk_rates(rng: &mut ChaCha8Rng, from: i64, to: i64) -> RateTable {
    let mut table = RateTable::new();
    let mut price: u64 = 420_000_000;
    let mut day = utc_date(from);
    let last = utc_date(to);
    while day <= last {
        table.insert(day, Rate(price)).expect("fresh positive day");
        let step: i64 = rng.gen_range(-40..=40);
        price = ((price as i64 * (1000 + step) / 1000) as u64 / 10_000 * 10_000).max(1_000_000);
        day = day.succ_opt().expect("date in range");
    }
    table
}
