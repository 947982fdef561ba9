use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::campaign::YearMonth;
use crate::error::{Error, Result};

/// How much each victim pays, in satoshi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Ransom {
    Fixed { sat: u64 },
    Uniform { min_sat: u64, max_sat: u64 },
}

impl Default for Ransom {
    /// Roughly 0.3 to 3 BTC, the sub-$2,000 mode at 2016 prices.
    fn default() -> Self {
        Ransom::Uniform {
            min_sat: 30_000_000,
            max_sat: 300_000_000,
        }
    }
}

/// Fractions of the collected funds sent to each kind of tagged service.
/// Whatever is left goes to an untagged address.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitProfile {
    #[serde(default)]
    pub exchange: f64,
    #[serde(default)]
    pub gambling: f64,
    #[serde(default)]
    pub mixer: f64,
}

impl Default for ExitProfile {
    fn default() -> Self {
        ExitProfile {
            exchange: 0.6,
            gambling: 0.1,
            mixer: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub family: String,
    pub victims: usize,
    #[serde(default)]
    pub ransom: Ransom,
    /// Number of collector addresses; each consolidates `fan_in` payments.
    pub collectors: usize,
    pub fan_in: usize,
    pub start: YearMonth,
    /// Pre-campaign addresses sharing the family's cluster, as a fraction
    /// of the victim count.
    #[serde(default)]
    pub noise_fraction: f64,
    #[serde(default)]
    pub exit: ExitProfile,
    /// Days over which victims pay.
    #[serde(default = "default_days")]
    pub campaign_days: u32,
}

fn default_days() -> u32 {
    90
}

impl CampaignSpec {
    pub fn new(family: &str, victims: usize, collectors: usize, fan_in: usize, start: YearMonth) -> CampaignSpec {
        CampaignSpec {
            family: family.to_string(),
            victims,
            ransom: Ransom::default(),
            collectors,
            fan_in,
            start,
            noise_fraction: 0.0,
            exit: ExitProfile::default(),
            campaign_days: default_days(),
        }
    }

    pub fn noise_addresses(&self) -> usize {
        (self.noise_fraction * self.victims as f64).round() as usize
    }
}

/// A whole synthetic world: campaigns plus unrelated background traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestbedSpec {
    #[serde(rename = "family")]
    pub families: Vec<CampaignSpec>,
    #[serde(default)]
    pub background_txs: usize,
    #[serde(default = "default_pool")]
    pub background_addresses: usize,
    /// Pairs of families whose exits both pay one untagged address.
    #[serde(default)]
    pub shared_collectors: Vec<[String; 2]>,
}

fn default_pool() -> usize {
    1000
}

impl TestbedSpec {
    pub fn new(families: Vec<CampaignSpec>) -> TestbedSpec {
        TestbedSpec {
            families,
            background_txs: 0,
            background_addresses: default_pool(),
            shared_collectors: Vec::new(),
        }
    }

    /// A small world with four families of different shapes, two of them
    /// sharing a collector, plus background traffic.
    pub fn demo() -> TestbedSpec {
        let ym = |s: &str| s.parse::<YearMonth>().expect("valid month");
        let mut alpha = CampaignSpec::new("Alpha", 400, 8, 25, ym("2016-02"));
        alpha.noise_fraction = 0.1;
        let mut bravo = CampaignSpec::new("Bravo", 120, 4, 10, ym("2016-04"));
        bravo.ransom = Ransom::Fixed { sat: 150_000_000 };
        bravo.exit = ExitProfile {
            exchange: 0.3,
            gambling: 0.0,
            mixer: 0.6,
        };
        let charlie = CampaignSpec::new("Charlie", 30, 0, 2, ym("2016-06"));
        let mut delta = CampaignSpec::new("Delta", 24, 2, 12, ym("2016-09"));
        delta.ransom = Ransom::Uniform {
            min_sat: 1_000_000_000,
            max_sat: 1_500_000_000,
        };
        let mut spec = TestbedSpec::new(vec![alpha, bravo, charlie, delta]);
        spec.background_txs = 5_000;
        spec.background_addresses = 2_000;
        spec.shared_collectors.push(["Alpha".into(), "Bravo".into()]);
        spec
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TestbedSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<TestbedSpec> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn family(&self, name: &str) -> Option<&CampaignSpec> {
        self.families.iter().find(|f| f.family == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        let mut names = BTreeSet::new();
        for f in &self.families {
            let name = &f.family;
            if name.is_empty() || name.contains(|c: char| c == ',' || c == '"' || c.is_control()) {
                return bad(format!("family name `{name}` is empty or contains a delimiter"));
            }
            if !names.insert(name) {
                return bad(format!("family {name} declared twice"));
            }
            if f.collectors > 0 && f.fan_in < 2 {
                return bad(format!("{name}: fan-in {} cannot make a collector", f.fan_in));
            }
            if f.collectors * f.fan_in > f.victims {
                return bad(format!(
                    "{name}: {} collectors with fan-in {} need more than {} victims",
                    f.collectors, f.fan_in, f.victims
                ));
            }
            let fractions = [f.noise_fraction, f.exit.exchange, f.exit.gambling, f.exit.mixer];
            if fractions.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return bad(format!("{name}: fractions must lie in [0, 1]"));
            }
            if f.exit.exchange + f.exit.gambling + f.exit.mixer > 1.0 + 1e-9 {
                return bad(format!("{name}: exit fractions sum above 1"));
            }
            match f.ransom {
                Ransom::Fixed { sat: 0 } => return bad(format!("{name}: zero ransom")),
                Ransom::Uniform { min_sat, max_sat } if min_sat == 0 || min_sat > max_sat => {
                    return bad(format!("{name}: ransom range {min_sat}..={max_sat}"))
                }
                _ => {}
            }
            if f.campaign_days == 0 {
                return bad(format!("{name}: campaign must last at least a day"));
            }
        }
        if self.background_txs > 0 && self.background_addresses < 2 {
            return bad("background traffic needs at least two addresses".into());
        }
        for [a, b] in &self.shared_collectors {
            if a == b {
                return bad(format!("shared collector pairs {a} with itself"));
            }
            for name in [a, b] {
                match self.family(name) {
                    None => return bad(format!("shared collector names unknown family {name}")),
                    Some(f) if f.collectors < 2 => {
                        return bad(format!("shared collector needs {name} to have at least two collectors"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
