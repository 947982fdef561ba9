use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowtrace::cluster::compute_partition;
use flowtrace::config::RunConfig;
use flowtrace::econ::Bucket;
use flowtrace::flows::IndegreeMode;
use flowtrace::ledger::{ingest, LedgerFormat};
use flowtrace::pipeline::{self, analyze, artifacts, Inputs};
use flowtrace::testbed::{generate, TestbedSpec};
use flowtrace::{attribution, campaign, Error, Result};

/// Ransomware payment-flow analysis over a normalized Bitcoin ledger.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Run configuration.
    #[arg(long, short, global = true, default_value = "flowtrace.toml")]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    indegree_mode: Option<IndegreeMode>,
    #[arg(long, global = true)]
    bucket: Option<Bucket>,
    /// Fill interior gaps in the rate table by linear interpolation.
    #[arg(long, global = true)]
    interpolate_rates: bool,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the ledger.
    Ingest {
        /// Also write the address occurrence index.
        #[arg(long)]
        index: bool,
    },
    /// Co-spend clustering and tag propagation.
    Cluster,
    /// Seed expansion and time filtering.
    Expand,
    /// Outgoing-relationship graphs, key addresses and exit points.
    Flows {
        /// Also write the full address and cluster edge lists.
        #[arg(long)]
        dump_edges: bool,
    },
    /// Payment totals, series and the market summary.
    Econ,
    /// Every stage; reuses the previous report when inputs are unchanged.
    Report,
    /// Generate a synthetic ledger with planted campaigns.
    Synth {
        /// Testbed spec (TOML); a built-in demo world when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Destination directory.
        #[arg(long, default_value = "synth")]
        dir: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = RunConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        c.out = out.clone();
    }
    if let Some(m) = cli.indegree_mode {
        c.indegree_mode = m;
    }
    if let Some(b) = cli.bucket {
        c.bucket = b;
    }
    c.interpolate_rates |= cli.interpolate_rates;
    Ok(c)
}

fn emit(cli: &Cli, value: &serde_json::Value, human: impl FnOnce() -> String) {
    if cli.json {
        println!("{}", serde_json::to_string_pretty(value).expect("json value"));
    } else {
        print!("{}", human());
    }
}

fn read_json(path: PathBuf) -> Result<serde_json::Value> {
    let bytes = std::fs::read(&path).map_err(|e| Error::Io { path, source: e })?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn market_table(summary: &serde_json::Value) -> String {
    let mut s = format!("{:<24} {:>9} {:>14} {:>14} {:>7}\n", "family", "addresses", "btc", "usd", "share");
    for f in summary["families"].as_array().into_iter().flatten() {
        s += &format!(
            "{:<24} {:>9} {:>14} {:>14} {:>6.1}%\n",
            f["family"].as_str().unwrap_or_default(),
            f["addresses"].to_string(),
            f["btc"].as_str().unwrap_or_default(),
            f["usd"].to_string(),
            f["share"].as_f64().unwrap_or(0.0) * 100.0
        );
    }
    s += &format!(
        "{:<24} {:>9} {:>14} {:>14}\n",
        "total",
        "",
        summary["total_btc"].as_str().unwrap_or_default(),
        summary["total_usd"].to_string()
    );
    s
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { spec, seed, dir } => {
            let spec = match spec {
                Some(p) => TestbedSpec::load(p)?,
                None => TestbedSpec::demo(),
            };
            let tb = generate(&spec, *seed)?;
            let config = tb.write_to(dir)?;
            let v = serde_json::json!({
                "transactions": tb.transactions.len(),
                "families": tb.truth.families.len(),
                "config": config,
            });
            emit(cli, &v, || {
                format!(
                    "wrote {} transactions for {} families; run with --config {}\n",
                    tb.transactions.len(),
                    tb.truth.families.len(),
                    config.display()
                )
            });
            Ok(())
        }
        Command::Ingest { index } => {
            let c = load_config(cli)?;
            let store = ingest(&c.ledger, LedgerFormat::Jsonl)?;
            pipeline::write_ledger_stats(&store, &c.out)?;
            if *index {
                let path = c.out.join("address_index.csv");
                let file = std::fs::File::create(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                store
                    .write_index(std::io::BufWriter::new(file))
                    .map_err(|e| Error::Io { path, source: e })?;
            }
            let v = read_json(c.out.join(artifacts::LEDGER_STATS))?;
            emit(cli, &v, || {
                format!("{} transactions, {} addresses\n", store.tx_count(), store.address_count())
            });
            Ok(())
        }
        Command::Cluster => {
            let c = load_config(cli)?;
            let store = ingest(&c.ledger, LedgerFormat::Jsonl)?;
            let tags = match &c.tags {
                Some(p) => attribution::load_tags(p)?,
                None => Default::default(),
            };
            let partition = compute_partition(&store);
            let attr = attribution::attribute_clusters(&tags, &partition, &store);
            pipeline::write_partition(&partition, &store, &c.out)?;
            pipeline::write_cluster_stats(&partition, &attr, &c.out)?;
            let v = read_json(c.out.join(artifacts::CLUSTER_STATS))?;
            emit(cli, &v, || {
                format!(
                    "{} addresses in {} clusters, {} tagged\n",
                    partition.address_count(),
                    partition.cluster_count(),
                    attr.tagged_cluster_count()
                )
            });
            Ok(())
        }
        Command::Expand => {
            let c = load_config(cli)?;
            c.check_inputs()?;
            let store = ingest(&c.ledger, LedgerFormat::Jsonl)?;
            let seeds = campaign::load_seeds(&c.seeds)?;
            let partition = compute_partition(&store);
            let campaigns = pipeline::campaigns(&seeds, &c.starts, &partition, &store);
            pipeline::write_expansion(&campaigns, &c.out)?;
            let rows: Vec<_> = campaigns
                .iter()
                .map(|f| {
                    serde_json::json!({
                        "family": f.family,
                        "seed_addr": f.seeds.len(),
                        "clusters": f.clusters_touched,
                        "exp_addr": f.expanded.len(),
                        "exp_addr_tf": f.expanded_tf.len(),
                    })
                })
                .collect();
            emit(cli, &serde_json::json!(rows), || {
                campaigns
                    .iter()
                    .map(|f| format!("{}: {} expanded, {} after time filter\n", f.family, f.expanded.len(), f.expanded_tf.len()))
                    .collect()
            });
            Ok(())
        }
        Command::Flows { dump_edges } => {
            let c = load_config(cli)?;
            let inputs = Inputs::load(&c)?;
            let a = analyze(&inputs, &c.starts, (&c).into())?;
            pipeline::write_flows(&a, &inputs.store, &c.out)?;
            if *dump_edges {
                pipeline::write_edge_dumps(&a, &inputs.store, &c.out)?;
            }
            let v = serde_json::to_value(&a.indegree)?;
            emit(cli, &v, || {
                let mut s = String::new();
                for (family, f) in &a.families {
                    let expanded = f.keys.iter().filter(|k| k.was_expanded).count();
                    s += &format!("{family}: {} new key, {expanded} expanded key\n", f.keys.len() - expanded);
                }
                s + &format!("{} cross-family links\n", a.links.len())
            });
            Ok(())
        }
        Command::Econ => {
            let c = load_config(cli)?;
            let inputs = Inputs::load(&c)?;
            let a = analyze(&inputs, &c.starts, (&c).into())?;
            pipeline::write_econ(&a, &c.out)?;
            let v = a.summary_json();
            emit(cli, &v, || market_table(&v));
            Ok(())
        }
        Command::Report => {
            let c = load_config(cli)?;
            let r = pipeline::run_report(&c)?;
            emit(cli, &r.summary, || {
                let note = if r.cached { " (unchanged inputs, reused)" } else { "" };
                format!("report in {}{note}\n{}", c.out.display(), market_table(&r.summary))
            });
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
