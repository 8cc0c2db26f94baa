//! The two reward functions of the move-to-target task.

use super::Outcome;

/// Progress-shaped reward: 10 per meter of progress toward the target,
/// a 0.01 step penalty, and a +/-10 terminal bonus.
pub fn reward_dense(prev_dist: f64, new_dist: f64, outcome: Outcome) -> f64 {
    let bonus = match outcome {
        Outcome::Solved => 10.0,
        Outcome::Collision => -10.0,
        Outcome::Timeout | Outcome::Running => 0.0,
    };
    (prev_dist - new_dist) * 10.0 - 0.01 + bonus
}

/// Sparse reward paid only when the episode ends.
pub fn reward_terminal(outcome: Outcome) -> f64 {
    match outcome {
        Outcome::Solved => 1.0,
        Outcome::Collision => -1.0,
        Outcome::Timeout | Outcome::Running => 0.0,
    }
}
