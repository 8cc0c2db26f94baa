//! Session configuration: a single JSON document describing the algorithm,
//! environment, world, process topology and budget.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::agents::{DqnHyperparams, ReinforceHyperparams};
use crate::envkit::EnvConfig;

pub const DEFAULT_RESTART_AFTER_RESETS: u32 = 24;

/// Environment variable overriding the broker address, for container
/// composition where the broker runs elsewhere.
pub const BROKER_ENV_VAR: &str = "RLH_BROKER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dqn,
    Reinforce,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Reinforce => "reinforce",
        }
    }
}

fn default_broker() -> String {
    "autostart".to_string()
}

fn default_restart_after() -> u32 {
    DEFAULT_RESTART_AFTER_RESETS
}

fn default_eval_episodes() -> u32 {
    20
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything one training session needs. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub dqn: DqnHyperparams,
    #[serde(default)]
    pub reinforce: ReinforceHyperparams,
    pub world_path: PathBuf,
    /// `"autostart"` to run an in-process broker, otherwise `HOST:PORT`.
    #[serde(default = "default_broker")]
    pub broker: String,
    /// Simulator command template; arguments may use `{world}` / `{broker}`.
    /// Defaults to re-invoking this binary's `sim` subcommand.
    #[serde(default)]
    pub simulator_cmd: Option<Vec<String>>,
    /// Proactive simulator restart after at most this many resets.
    #[serde(default = "default_restart_after")]
    pub restart_after_resets: u32,
    /// Training budget: env steps for dqn, episodes for reinforce.
    pub budget: u64,
    /// Evaluate every N budget units; 0 evaluates only at the end.
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl SessionConfig {
    pub fn load(path: &Path) -> Result<SessionConfig, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg: SessionConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.budget == 0 {
            return Err(PipelineError::Config("budget must be positive".into()));
        }
        if self.restart_after_resets == 0 {
            return Err(PipelineError::Config(
                "restart_after_resets must be at least 1".into(),
            ));
        }
        if self.eval_episodes == 0 {
            return Err(PipelineError::Config("eval_episodes must be positive".into()));
        }
        if self.broker != "autostart" && self.broker.parse::<std::net::SocketAddr>().is_err() {
            return Err(PipelineError::Config(format!(
                "broker must be \"autostart\" or HOST:PORT, got {:?}",
                self.broker
            )));
        }
        self.env
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    /// Broker choice after applying the `RLH_BROKER` override.
    pub fn effective_broker(&self) -> String {
        std::env::var(BROKER_ENV_VAR).unwrap_or_else(|_| self.broker.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> &'static str {
        r#"{"algorithm": "dqn", "world_path": "w.json", "budget": 100}"#
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: SessionConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Dqn);
        assert_eq!(cfg.broker, "autostart");
        assert_eq!(cfg.restart_after_resets, 24);
        assert_eq!(cfg.eval_episodes, 20);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        assert_eq!(cfg.env.max_steps, 200);
        assert_eq!(cfg.dqn.gamma, 0.99);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<SessionConfig>(
            r#"{"algorithm": "dqn", "world_path": "w", "budget": 1, "bogus": true}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn zero_budget_rejected() {
        let cfg: SessionConfig = serde_json::from_str(
            r#"{"algorithm": "reinforce", "world_path": "w", "budget": 0}"#,
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bad_broker_rejected() {
        let mut cfg: SessionConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.broker = "not-an-address".into();
        assert!(cfg.validate().is_err());
        cfg.broker = "127.0.0.1:7000".into();
        cfg.validate().unwrap();
    }
}
