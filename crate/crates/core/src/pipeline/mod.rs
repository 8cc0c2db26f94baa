//! Unattended session runner: config loading, broker/simulator provisioning,
//! the collect–train–evaluate loop with the reset-bound restart policy, and
//! metrics/report emission.

pub mod config;
pub mod metrics;
pub mod report;
pub mod session;
pub mod worldgen;

pub use config::{Algorithm, SessionConfig, DEFAULT_RESTART_AFTER_RESETS};
pub use metrics::{read_metrics, MetricsRecord, MetricsWriter};
pub use report::{read_report, write_report, EvalRecord, RestartCounts, RestartEvent, SessionReport};
pub use session::{
    evaluate_policy, provision, restart_policy, run_eval_only, run_session, EvalResult,
    RestartDecision, Stack,
};
pub use worldgen::instantiate_world_variants;

use thiserror::Error;

use crate::agents::AgentError;
use crate::envkit::EnvError;
use crate::simclient::ClientError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("GENERATION_ERROR: {0}")]
    Generation(String),
    #[error("session aborted: {0}")]
    Aborted(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl PipelineError {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> PipelineError {
        PipelineError::Io {
            path: path.to_string(),
            source,
        }
    }

    /// Process exit code contract: 1 config errors, 2 runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Generation(_) => 1,
            _ => 2,
        }
    }
}
