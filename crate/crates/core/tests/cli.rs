use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowtrace::testbed::{generate, CampaignSpec, TestbedSpec};
use sha2::{Digest, Sha256};

fn flowtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowtrace"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn world(dir: &Path) -> PathBuf {
    let mut spec = TestbedSpec::new(vec![
        CampaignSpec::new("Alpha", 40, 4, 5, "2016-02".parse().unwrap()),
        CampaignSpec::new("Beta", 12, 2, 3, "2016-05".parse().unwrap()),
    ]);
    spec.background_txs = 200;
    spec.shared_collectors.push(["Alpha".into(), "Beta".into()]);
    generate(&spec, 9).unwrap().write_to(dir).unwrap()
}

fn hashes(dir: &Path) -> BTreeMap<String, String> {
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

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn report_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let out = flowtrace(&["--config", s(&cfg), "--json", "report"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let shares: f64 = summary["families"].as_array().unwrap().iter().map(|f| f["share"].as_f64().unwrap()).sum();
    assert!((shares - 1.0).abs() < 1e-9);
    let report = tmp.path().join("report");
    for f in flowtrace::pipeline::artifacts::REPORT {
        assert!(report.join(f).is_file(), "{f} missing");
    }
    for family in ["Alpha", "Beta"] {
        assert!(report.join("outrel").join(format!("{family}.csv")).is_file());
    }
    let impact = std::fs::read_to_string(report.join("impact.csv")).unwrap();
    assert!(impact.starts_with("family,addresses,btc,usd\n"));
    let links = std::fs::read_to_string(report.join("family_links.csv")).unwrap();
    assert_eq!(links.lines().count(), 2, "{links}");
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = flowtrace(&["--config", s(&cfg), "--out", s(dir), "report"]);
        assert!(out.status.success());
    }
    let first = hashes(&a);
    assert_eq!(first, hashes(&b));

    // deleting intermediates and rerunning reproduces them
    std::fs::remove_file(a.join("impact.csv")).unwrap();
    std::fs::remove_dir_all(a.join("outrel")).unwrap();
    let out = flowtrace(&["--config", s(&cfg), "--out", s(&a), "report"]);
    assert!(out.status.success());
    assert_eq!(first, hashes(&a));

    // an unchanged rerun is served from the stamp
    let out = flowtrace(&["--config", s(&cfg), "--out", s(&a), "report"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("reused"));
    assert_eq!(first, hashes(&a));
}

#[test]
fn stamp_tracks_inputs_and_options() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let out = flowtrace(&["--config", s(&cfg), "report"]);
    assert!(out.status.success());
    let out = flowtrace(&["--config", s(&cfg), "--bucket", "week", "report"]);
    assert!(!String::from_utf8_lossy(&out.stdout).contains("reused"));
    let series = std::fs::read_to_string(tmp.path().join("report/series.csv")).unwrap();
    let starts: Vec<&str> = series.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    let monday = |d: &&str| chrono::NaiveDate::parse_from_str(d, "%Y-%m-%d").unwrap().format("%a").to_string() == "Mon";
    assert!(starts.iter().all(monday));
}

#[test]
fn missing_rates_exit_3_naming_the_day() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let rates = tmp.path().join("rates.csv");
    let first_day = std::fs::read_to_string(&rates).unwrap().lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    std::fs::remove_file(&rates).unwrap();
    let out = flowtrace(&["--config", s(&cfg), "report"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    // the earliest value transfer is the operator's first spend, after the first listed day
    assert!(err.contains("no closing rate for 20"), "{err}");
    let named = err.split("no closing rate for ").nth(1).unwrap().trim();
    assert!(named >= first_day.as_str());
}

#[test]
fn gap_in_rates_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let rates = tmp.path().join("rates.csv");
    let text = std::fs::read_to_string(&rates).unwrap();
    // drop every day from the middle of the campaign on
    let kept: Vec<&str> = text.lines().take(80).collect();
    std::fs::write(&rates, kept.join("\n") + "\n").unwrap();
    let out = flowtrace(&["--config", s(&cfg), "econ"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invariant_and_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let ledger = tmp.path().join("ledger.jsonl");
    let text = std::fs::read_to_string(&ledger).unwrap();
    let first = text.lines().next().unwrap().to_string();

    std::fs::write(&ledger, format!("{text}{first}\n")).unwrap();
    let out = flowtrace(&["--config", s(&cfg), "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate txid"));

    std::fs::write(&ledger, format!("{text}{{\"txid\": 5}}\n")).unwrap();
    let out = flowtrace(&["--config", s(&cfg), "ingest"]);
    assert_eq!(out.status.code(), Some(1));

    let out = flowtrace(&["--config", s(&tmp.path().join("nope.toml")), "report"]);
    assert_eq!(out.status.code(), Some(1));
    let out = flowtrace(&["--indegree-mode", "weighted", "report"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stage_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let out_dir = tmp.path().join("stages");
    for (cmd, file) in [
        ("ingest", "ledger_stats.json"),
        ("cluster", "partition.csv"),
        ("expand", "dataset_summary.csv"),
        ("flows", "key_summary.csv"),
        ("econ", "summary.json"),
    ] {
        let out = flowtrace(&["--config", s(&cfg), "--out", s(&out_dir), "--json", cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).expect("json on stdout");
        assert!(out_dir.join(file).is_file(), "{cmd} wrote no {file}");
    }
    let out = flowtrace(&["--config", s(&cfg), "--out", s(&out_dir), "flows", "--dump-edges"]);
    assert!(out.status.success());
    let edges = std::fs::read_to_string(out_dir.join("address_graph.csv")).unwrap();
    assert!(edges.starts_with("src,dst,tx_count,value_sat,value_usd\n"));
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let out = flowtrace(&["synth", "--seed", "4", "--dir", s(d)]);
        assert!(out.status.success());
    }
    assert_eq!(hashes(&a), hashes(&b));
    let c = tmp.path().join("c");
    flowtrace(&["synth", "--seed", "5", "--dir", s(&c)]);
    assert_ne!(hashes(&a)["ledger.jsonl"], hashes(&c)["ledger.jsonl"]);
}
