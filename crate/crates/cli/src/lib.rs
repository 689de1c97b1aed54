//! Scenario files, orchestration and report emission for the `riskalloc` binary.

pub mod config;
pub mod report;
pub mod run;

pub use config::ScenarioConfig;
pub use run::{compare_timings, run_scenario, RunOutput};
