//! Deterministic synthetic ledgers with planted ransomware campaigns.
//!
//! Each campaign follows the usual shape: victims pay fresh addresses, an
//! operator wallet co-spends groups of those payments into collector
//! addresses, and one exit transaction moves the collected funds to
//! deposit addresses of tagged services.

mod evaluate;
mod generate;
mod spec;

pub use evaluate::{evaluate, FamilyOutcome, FamilyScore, Score};
pub use generate::{files, generate, load_truth, FamilyTruth, GroundTruth, SharedCollector, Testbed};
pub use spec::{CampaignSpec, ExitProfile, Ransom, TestbedSpec};
