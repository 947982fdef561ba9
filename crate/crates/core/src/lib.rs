//! Payment-flow forensics over a normalized Bitcoin ledger.
//!
//! The pipeline ingests a transaction ledger, builds an address-level value
//! graph, clusters addresses by co-spending, expands seed addresses of each
//! ransomware family into their clusters, finds the collector addresses the
//! campaign funnels money into, and estimates a lower bound of the money
//! each family received.

pub mod addrgraph;
pub mod attribution;
pub mod campaign;
pub mod cluster;
pub mod config;
pub mod econ;
pub mod error;
pub mod flows;
pub mod ledger;
pub mod money;
pub mod pipeline;
pub mod testbed;

pub use error::{Error, Result};
