//! Run configuration.
//!
//! A TOML file with a `[run]` table for paths and options; every other
//! top-level table names a family and carries its campaign start month:
//!
//! ```toml
//! [run]
//! ledger = "ledger.jsonl"
//! seeds = "seeds.csv"
//! tags = "tags.csv"
//! rates = "rates.csv"
//! out = "report"
//! indegree_mode = "distinct_sources"
//! bucket = "month"
//! interpolate_rates = false
//!
//! [Locky]
//! start = "2016-02"
//! ```
//!
//! Relative paths resolve against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::campaign::YearMonth;
use crate::econ::Bucket;
use crate::error::{Error, Result};
use crate::flows::IndegreeMode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub ledger: PathBuf,
    pub seeds: PathBuf,
    pub tags: Option<PathBuf>,
    pub rates: PathBuf,
    pub out: PathBuf,
    pub starts: BTreeMap<String, YearMonth>,
    pub indegree_mode: IndegreeMode,
    pub bucket: Bucket,
    pub interpolate_rates: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunTable {
    ledger: PathBuf,
    seeds: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tags: Option<PathBuf>,
    rates: PathBuf,
    #[serde(default = "default_out")]
    out: PathBuf,
    #[serde(default)]
    indegree_mode: IndegreeMode,
    #[serde(default)]
    bucket: Bucket,
    #[serde(default)]
    interpolate_rates: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("report")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyTable {
    start: YearMonth,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let run = table
            .remove("run")
            .ok_or_else(|| Error::Config("missing [run] table".into()))?;
        let run: RunTable = run.try_into().map_err(|e: toml::de::Error| Error::Config(format!("[run]: {e}")))?;
        let mut starts = BTreeMap::new();
        for (family, value) in table {
            let f: FamilyTable = value
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("[{family}]: {e}")))?;
            starts.insert(family, f.start);
        }
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        Ok(RunConfig {
            ledger: resolve(run.ledger),
            seeds: resolve(run.seeds),
            tags: run.tags.map(resolve),
            rates: resolve(run.rates),
            out: resolve(run.out),
            starts,
            indegree_mode: run.indegree_mode,
            bucket: run.bucket,
            interpolate_rates: run.interpolate_rates,
        })
    }

    /// Renders the config as TOML. Paths are written as given.
    pub fn to_toml(&self) -> String {
        let run = RunTable {
            ledger: self.ledger.clone(),
            seeds: self.seeds.clone(),
            tags: self.tags.clone(),
            rates: self.rates.clone(),
            out: self.out.clone(),
            indegree_mode: self.indegree_mode,
            bucket: self.bucket,
            interpolate_rates: self.interpolate_rates,
        };
        let mut table = toml::Table::new();
        table.insert("run".into(), toml::Value::try_from(run).expect("run table serializes"));
        for (family, start) in &self.starts {
            let f = FamilyTable { start: *start };
            table.insert(family.clone(), toml::Value::try_from(f).expect("family table serializes"));
        }
        toml::to_string(&table).expect("config serializes")
    }

    /// Input files that must exist before a run. A missing rates file is
    /// not listed: it behaves like an empty rate table.
    pub fn check_inputs(&self) -> Result<()> {
        let mut required = vec![&self.ledger, &self.seeds];
        required.extend(&self.tags);
        for p in required {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
[run]
ledger = "ledger.jsonl"
seeds = "seeds.csv"
rates = "/data/rates.csv"
indegree_mode = "distinct_txs"
bucket = "week"

[Locky]
start = "2016-02"

[WannaCry]
start = "2017-05"
"#;

    #[test]
    fn parse_and_resolve() {
        let c = RunConfig::parse(TEXT, Path::new("/work")).unwrap();
        assert_eq!(c.ledger, PathBuf::from("/work/ledger.jsonl"));
        assert_eq!(c.rates, PathBuf::from("/data/rates.csv"));
        assert_eq!(c.out, PathBuf::from("/work/report"));
        assert_eq!(c.tags, None);
        assert_eq!(c.indegree_mode, IndegreeMode::DistinctTxs);
        assert_eq!(c.bucket, Bucket::Week);
        assert!(!c.interpolate_rates);
        assert_eq!(c.starts["Locky"].to_string(), "2016-02");
        assert_eq!(c.starts.len(), 2);
    }

    #[test]
    fn roundtrip() {
        let c = RunConfig::parse(TEXT, Path::new("")).unwrap();
        let again = RunConfig::parse(&c.to_toml(), Path::new("")).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_bad_input() {
        let bad_month = TEXT.replace("2016-02", "2016-2");
        assert!(matches!(RunConfig::parse(&bad_month, Path::new("")), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[Locky]\nstart = \"2016-02\"\n", Path::new("")), Err(Error::Config(_))));
        let unknown = TEXT.replace("bucket = \"week\"", "bucket = \"week\"\ncolour = 1");
        assert!(RunConfig::parse(&unknown, Path::new("")).is_err());
        let bad_mode = TEXT.replace("distinct_txs", "weighted");
        assert!(RunConfig::parse(&bad_mode, Path::new("")).is_err());
    }
}
