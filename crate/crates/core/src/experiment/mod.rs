//! Scenario configuration, full-pipeline runs, sweeps and the
//! exact-window demonstration.

pub mod config;
pub mod pipeline;
pub mod remark1;
pub mod report;
pub mod sweep;

pub use config::{ScenarioConfig, SweepParam};
pub use pipeline::{Pipeline, PipelineState, Snapshot};
pub use report::{RunOutput, RunTrace, Summary};

use crate::error::Result;

/// Validates and runs a scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    Pipeline::new(cfg)?.run()
}
