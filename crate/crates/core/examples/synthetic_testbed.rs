//! Plant campaigns in a synthetic ledger, run the analysis in memory and
//! score it against the planted truth.

use flowtrace::econ::Bucket;
use flowtrace::flows::IndegreeMode;
use flowtrace::pipeline::{analyze, Inputs, Options};
use flowtrace::testbed::{evaluate, generate, CampaignSpec, TestbedSpec};

fn main() -> flowtrace::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let mut noisy = CampaignSpec::new("Noisy", 100, 5, 20, "2016-03".parse()?);
    noisy.noise_fraction = 0.2;
    let mut spec = TestbedSpec::new(vec![noisy, CampaignSpec::new("Plain", 10, 1, 10, "2016-07".parse()?)]);
    spec.background_txs = 2_000;
    let tb = generate(&spec, seed)?;
    println!("{} transactions, seed {seed}", tb.transactions.len());

    let inputs = Inputs {
        store: tb.store()?,
        seeds: tb.seed_book(),
        tags: tb.tag_set(),
        rates: tb.rates.clone(),
    };
    let opts = Options {
        indegree_mode: IndegreeMode::DistinctSources,
        bucket: Bucket::Month,
    };
    let analysis = analyze(&inputs, &tb.starts(), opts)?;
    for s in evaluate(&analysis.outcomes(&inputs.store), &tb.truth)? {
        println!(
            "{}: keys p={:.2} r={:.2}, expanded_tf p={:.2} r={:.2}, totals exact {}",
            s.family, s.keys.precision, s.keys.recall, s.expanded_tf.precision, s.expanded_tf.recall, s.total_sat_exact
        );
    }
    Ok(())
}
