//! Line-delimited JSON episode metrics.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::envkit::Outcome;

pub const METRICS_FILE: &str = "metrics.jsonl";

/// One completed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: u64,
    pub steps: u32,
    #[serde(rename = "return")]
    pub ret: f64,
    pub outcome: Outcome,
    pub wall_ms: u64,
    pub resets_since_start: u32,
}

/// Append-only JSONL writer, flushed after every record so a crash tears at
/// most the final line.
pub struct MetricsWriter {
    writer: BufWriter<File>,
    path: String,
}

impl MetricsWriter {
    pub fn append_to(path: &Path) -> Result<MetricsWriter, PipelineError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| PipelineError::io(path.display(), e))?;
        Ok(MetricsWriter {
            writer: BufWriter::new(file),
            path: path.display().to_string(),
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<(), PipelineError> {
        let line = serde_json::to_string(record)
            .map_err(|e| PipelineError::Config(format!("serialize metrics: {e}")))?;
        let io_err = |e| PipelineError::io(&self.path, e);
        self.writer.write_all(line.as_bytes()).map_err(io_err)?;
        self.writer.write_all(b"\n").map_err(io_err)?;
        self.writer.flush().map_err(io_err)
    }
}

/// Read back a metrics file. A torn (unparseable) final line is ignored;
/// damage anywhere else is an error.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, PipelineError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| PipelineError::io(path.display(), e))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<MetricsRecord>(line) {
            Ok(rec) => out.push(rec),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("ignoring torn final metrics line: {e}");
            }
            Err(e) => {
                return Err(PipelineError::Config(format!(
                    "corrupt metrics line {} in {}: {e}",
                    i + 1,
                    path.display()
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(episode: u64) -> MetricsRecord {
        MetricsRecord {
            episode,
            steps: 12,
            ret: -0.12,
            outcome: Outcome::Timeout,
            wall_ms: 34,
            resets_since_start: 3,
        }
    }

    #[test]
    fn round_trip_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        let mut writer = MetricsWriter::append_to(&path).unwrap();
        for i in 0..10 {
            writer.write(&record(i)).unwrap();
        }
        drop(writer);
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 10);
        assert_eq!(back[7], record(7));
    }

    #[test]
    fn torn_final_line_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        let mut writer = MetricsWriter::append_to(&path).unwrap();
        writer.write(&record(0)).unwrap();
        writer.write(&record(1)).unwrap();
        drop(writer);
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"episode\": 2, \"steps\"");
        std::fs::write(&path, text).unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn corrupt_middle_line_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        let good = serde_json::to_string(&record(0)).unwrap();
        std::fs::write(&path, format!("{good}\nnot json\n{good}\n")).unwrap();
        assert!(read_metrics(&path).is_err());
    }

    #[test]
    fn append_preserves_existing_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        MetricsWriter::append_to(&path).unwrap().write(&record(0)).unwrap();
        MetricsWriter::append_to(&path).unwrap().write(&record(1)).unwrap();
        assert_eq!(read_metrics(&path).unwrap().len(), 2);
    }
}
