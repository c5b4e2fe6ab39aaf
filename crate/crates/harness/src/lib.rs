//! Experiment runner for streaming input-data and simulation budget
//! allocation: TOML configs, seeded replications in parallel, empirical PCS
//! curves with Wilson intervals, and the inventory ground-truth cache.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod pcs;
pub mod truth;

pub use config::{load_config, parse_config, to_toml, ExperimentConfig, ModelSpec, PartitionSpec};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentResult, RunOptions};
pub use output::write_results;
pub use pcs::{empirical_pcs, wilson, PcsCurve, PcsPoint, Z95};
pub use truth::{build_oracle, ground_truth, GroundTruth};
