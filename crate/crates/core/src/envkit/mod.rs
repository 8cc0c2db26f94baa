//! Gym-style environment layer: observations, discrete actions, rewards and
//! the move-to-target-and-stop task.

mod driver;
mod move_to_target;
mod render;
mod reward;

pub use driver::{BusDriver, LocalDriver, SimDriver};
pub use move_to_target::{MoveToTargetEnv, ENV_ID};
pub use render::render_grid;
pub use reward::{reward_dense, reward_terminal};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simclient::{ClientError, MovementAction};
use crate::simcore::Pose2D;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action index {index} out of range for {len} actions")]
    OutOfRange { index: usize, len: usize },
    #[error("environment is closed")]
    Closed,
    #[error("reset() must be called before step()")]
    NotReset,
    #[error("sensors did not become valid within {0} sim steps after reset")]
    ValidityTimeout(u32),
    #[error("simulator lost: {0}")]
    SimulatorLost(String),
    #[error("bad environment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Client(ClientError),
}

impl From<ClientError> for EnvError {
    fn from(e: ClientError) -> EnvError {
        if e.is_simulator_loss() {
            EnvError::SimulatorLost(e.to_string())
        } else {
            EnvError::Client(e)
        }
    }
}

/// Terminal label of an environment step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Running,
    Solved,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Running => "RUNNING",
            Outcome::Solved => "SOLVED",
            Outcome::Collision => "COLLISION",
            Outcome::Timeout => "TIMEOUT",
        }
    }
}

/// RL-facing observation. Flattened layout is fixed:
/// `[ir0..ir8, touch, x, y, theta, tx, ty]`, the target tail present only
/// when configured.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub ir: Vec<f64>,
    pub touch: bool,
    pub pose: Pose2D,
    pub target: Option<(f64, f64)>,
}

impl Observation {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ir.len() + 6);
        out.extend_from_slice(&self.ir);
        out.push(if self.touch { 1.0 } else { 0.0 });
        out.push(self.pose.x);
        out.push(self.pose.y);
        out.push(self.pose.theta);
        if let Some((tx, ty)) = self.target {
            out.push(tx);
            out.push(ty);
        }
        out
    }
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RewardMode {
    Dense,
    Terminal,
}

fn default_max_steps() -> u32 {
    200
}
fn default_reward_mode() -> RewardMode {
    RewardMode::Dense
}
fn default_true() -> bool {
    true
}
fn default_action_set() -> Vec<MovementAction> {
    MovementAction::ALL.to_vec()
}
fn default_solve_radius() -> f64 {
    0.10
}
fn default_steps_per_action() -> u32 {
    8
}

/// Tunable environment options, accepted as a key-value map in configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    #[serde(default = "default_reward_mode")]
    pub reward_mode: RewardMode,
    #[serde(default = "default_true")]
    pub include_target: bool,
    #[serde(default = "default_action_set")]
    pub action_set: Vec<MovementAction>,
    #[serde(default = "default_solve_radius")]
    pub solve_radius: f64,
    #[serde(default = "default_true")]
    pub solve_requires_stop: bool,
    #[serde(default = "default_steps_per_action")]
    pub steps_per_action: u32,
    /// Sensor sampling period; defaults to the world's basic timestep.
    #[serde(default)]
    pub sensor_period_ms: Option<u64>,
    #[serde(default)]
    pub randomize_target: bool,
    /// Sampling region for randomized targets; the whole arena when unset.
    #[serde(default)]
    pub target_region: Option<crate::simcore::Rect>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: default_max_steps(),
            reward_mode: default_reward_mode(),
            include_target: true,
            action_set: default_action_set(),
            solve_radius: default_solve_radius(),
            solve_requires_stop: true,
            steps_per_action: default_steps_per_action(),
            sensor_period_ms: None,
            randomize_target: false,
            target_region: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.max_steps == 0 {
            return Err(EnvError::BadConfig("max_steps must be positive".into()));
        }
        if self.action_set.is_empty() {
            return Err(EnvError::BadConfig("action_set must not be empty".into()));
        }
        if self.solve_requires_stop && !self.action_set.contains(&MovementAction::Stop) {
            return Err(EnvError::BadConfig(
                "action_set must include STOP when solve_requires_stop is set".into(),
            ));
        }
        if self.steps_per_action == 0 {
            return Err(EnvError::BadConfig("steps_per_action must be positive".into()));
        }
        Ok(())
    }
}
