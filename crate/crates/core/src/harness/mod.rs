//! Scenario registry, configuration and orchestration behind the CLI.

pub mod config;
pub mod run;
pub mod study;

pub use config::{Overrides, ScenarioConfig, CHECKS, SCENARIOS};
pub use run::{dyadic_step, emit_norm_table, run_check, run_scenario, write_report, NormRow, ScenarioOutcome};
pub use study::{convergence_study, default_levels, StudyLevel, StudyResult};
