//! Scenario runner for the positioning-device digital twin.
//!
//! A scenario is a JSON file naming one experiment kind, a seed, the model
//! sections it needs and a voltage protocol. [`scenario::run_scenario`] turns
//! it into an output directory of CSV tables, frames, plots and a manifest of
//! SHA-256 hashes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod presets;
pub mod scenario;

pub use config::{ScenarioConfig, ScenarioKind};
pub use error::{HarnessError, HarnessResult};
pub use scenario::{run_scenario, RunOptions, RunOutcome};
