//! Experiment runner around `degroot-core`: TOML configs, scenarios, result
//! files, plots and offline trajectory audits.

pub mod audit_cli;
pub mod config;
pub mod io;
pub mod plots;
pub mod result;
pub mod scenarios;
pub mod validate;

use std::path::PathBuf;

pub use config::ExperimentConfig;
pub use result::ScenarioResult;
pub use scenarios::run_scenario;
pub use validate::{validate, validate_text, Diagnostic};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("invalid config:{}", .0.iter().map(|d| format!("\n  {}: {}", d.field, d.message)).collect::<String>())]
    Invalid(Vec<Diagnostic>),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, String),
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Graph(#[from] degroot_core::GraphError),
    #[error(transparent)]
    Sim(#[from] degroot_core::SimError),
    #[error(transparent)]
    Audit(#[from] degroot_core::audit::AuditError),
    #[error(transparent)]
    Oracle(#[from] degroot_core::oracles::OracleError),
    #[error(transparent)]
    Rule(#[from] degroot_core::rule::RuleError),
}
