//! End-of-session summary document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;

pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartCounts {
    pub scheduled: u32,
    pub crash: u32,
}

impl RestartCounts {
    pub fn total(&self) -> u32 {
        self.scheduled + self.crash
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "cause")]
pub enum RestartEvent {
    /// Proactive restart by the reset-bound policy.
    Scheduled { resets_since_start: u32 },
    /// Reaction to a lost simulator; exit code recorded when observable.
    Crash { exit_code: Option<i32> },
}

/// One evaluation pass during or at the end of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Budget units consumed when the evaluation ran (env steps for dqn,
    /// episodes for reinforce).
    pub at: u64,
    pub success_rate: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub algorithm: String,
    pub total_duration_s: f64,
    pub episodes: u64,
    pub env_steps: u64,
    pub simulator_restarts: RestartCounts,
    pub restart_events: Vec<RestartEvent>,
    pub final_eval_success_rate: f64,
    pub eval_history: Vec<EvalRecord>,
    pub aborted: bool,
}

pub fn write_report(report: &SessionReport, out_dir: &Path) -> Result<(), PipelineError> {
    let path = out_dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| PipelineError::Config(format!("serialize report: {e}")))?;
    std::fs::write(&path, json).map_err(|e| PipelineError::io(path.display(), e))
}

pub fn read_report(out_dir: &Path) -> Result<SessionReport, PipelineError> {
    let path = out_dir.join(REPORT_FILE);
    let text =
        std::fs::read_to_string(&path).map_err(|e| PipelineError::io(path.display(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("corrupt report {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let report = SessionReport {
            algorithm: "dqn".into(),
            total_duration_s: 12.5,
            episodes: 100,
            env_steps: 4200,
            simulator_restarts: RestartCounts {
                scheduled: 4,
                crash: 1,
            },
            restart_events: vec![
                RestartEvent::Scheduled {
                    resets_since_start: 24,
                },
                RestartEvent::Crash { exit_code: Some(7) },
            ],
            final_eval_success_rate: 0.85,
            eval_history: vec![EvalRecord {
                at: 1000,
                success_rate: 0.85,
                mean_return: 9.1,
            }],
            aborted: false,
        };
        let dir = tempfile::tempdir().unwrap();
        write_report(&report, dir.path()).unwrap();
        assert_eq!(read_report(dir.path()).unwrap(), report);
    }
}
