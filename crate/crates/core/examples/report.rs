//! Write a synthetic world to disk and produce the full report from its
//! run config, as the `report` subcommand does.
//!
//!     cargo run --example report -- /tmp/flowtrace-demo

use flowtrace::config::RunConfig;
use flowtrace::pipeline::run_report;
use flowtrace::testbed::{generate, TestbedSpec};

fn main() -> flowtrace::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "flowtrace-demo".into());
    let tb = generate(&TestbedSpec::demo(), 1)?;
    let config = RunConfig::load(tb.write_to(&dir)?)?;
    let run = run_report(&config)?;
    println!("{}", serde_json::to_string_pretty(&run.summary)?);
    let again = run_report(&config)?;
    println!("second run reused the report: {}", again.cached);
    let mut files: Vec<String> = std::fs::read_dir(&config.out)
        .map_err(|e| flowtrace::Error::Io { path: config.out.clone(), source: e })?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    println!("{}: {}", config.out.display(), files.join(" "));
    Ok(())
}
