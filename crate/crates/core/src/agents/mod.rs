//! From-scratch value-based and policy-gradient learners over the dense
//! network in [`mlp`]. No autograd, no external math crates.

pub mod checkpoint;
pub mod dqn;
pub mod mlp;
pub mod reinforce;
pub mod replay;

pub use checkpoint::{load_policy, save_policy, Checkpoint, CHECKPOINT_VERSION};
pub use dqn::{dqn_loss_and_grad, epsilon_at, epsilon_greedy, DqnAgent, DqnHyperparams};
pub use mlp::{Gradients, Mlp, Optimizer, OptimizerKind};
pub use reinforce::{
    compute_returns, reinforce_loss_and_grad, sample_policy, Episode, ReinforceAgent,
    ReinforceHyperparams,
};
pub use replay::{ReplayBuffer, Transition};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("UNDERFULL_BUFFER: replay holds {len} transitions, warmup requires {warmup}")]
    UnderfullBuffer { len: usize, warmup: usize },
    #[error("EMPTY_BATCH: update called with no episodes")]
    EmptyBatch,
    #[error("CHECKPOINT_ERROR: {0}")]
    Checkpoint(String),
}

/// Names of the flattened observation entries, stored alongside checkpoints
/// so a policy cannot silently be replayed against a different layout.
pub fn obs_layout(include_target: bool) -> Vec<String> {
    let mut names: Vec<String> = (0..9).map(|i| format!("ir{i}")).collect();
    names.extend(["touch", "x", "y", "theta"].map(str::to_string));
    if include_target {
        names.extend(["target_x", "target_y"].map(str::to_string));
    }
    names
}
