//! Experiment orchestration: configuration, metrics files, run/compare
//! flows and the self-test oracle suites.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod oracles;

use thiserror::Error;

pub use config::{validate_config, ConfigIssue, ExperimentConfig, PolicyKind};
pub use experiment::{
    compare, config_diff_keys, run_evaluation_only, run_experiment, CompareReport, RunOutcome,
};
pub use metrics::{final_window_len, MetricsRow, SeedSummary, METRICS_HEADER, SMOOTHING_WINDOW};
pub use oracles::{run_selftest, OracleReport};

use crate::rl::RlError;
use crate::scheduler::EnvError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    ConfigIssues(Vec<ConfigIssue>),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown policy '{0}'")]
    UnknownPolicy(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("runs were produced with different configs; differing keys: {}", keys.join(", "))]
    ConfigMismatch { keys: Vec<String> },
    #[error("need at least 2 run directories, got {0}")]
    NotEnoughRuns(usize),
    #[error("runs share only {0} seeds; need at least 2 overlapping")]
    InsufficientOverlap(usize),
    #[error("metrics file error: {0}")]
    Metrics(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Rl(#[from] RlError),
}

impl HarnessError {
    /// Process exit code for the CLI: 2 usage, 3 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } => 3,
            _ => 2,
        }
    }
}
