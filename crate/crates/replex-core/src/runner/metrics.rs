//! On-disk text formats: atomic file writes, JSON, JSON-lines, and the
//! run-level `meta.json` summary. Everything written here is a pure
//! function of the resolved config — no timestamps, hostnames, or other
//! ambient state — so reruns produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionCurve;
use crate::tempering::{ExchangeEvent, MetricRow};

use super::RunnerError;

/// Writes `bytes` to `path` via a same-directory temp file + rename, so a
/// crash mid-write can never leave a truncated file under the final name.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    let tmp: PathBuf = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(RunnerError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(RunnerError::io(path))
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunnerError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| RunnerError::Config(format!("serialization failed: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Serializes `rows` as JSON-lines (one compact object per line) and writes
/// the file atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunnerError> {
    let mut buf = String::new();
    for row in rows {
        buf.push_str(
            &serde_json::to_string(row)
                .map_err(|e| RunnerError::Config(format!("serialization failed: {e}")))?,
        );
        buf.push('\n');
    }
    atomic_write(path, buf.as_bytes())
}

/// Reads a JSON-lines file, reporting the 1-based line number of the first
/// malformed row.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunnerError> {
    let text = fs::read_to_string(path).map_err(RunnerError::io(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|e| RunnerError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Reads `metrics.jsonl`.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, RunnerError> {
    read_jsonl(path)
}

/// Reads `events.jsonl`.
pub fn read_events(path: &Path) -> Result<Vec<ExchangeEvent>, RunnerError> {
    read_jsonl(path)
}

/// Reads `diffusion.jsonl` (one displacement curve per line).
pub fn read_curves(path: &Path) -> Result<Vec<DiffusionCurve>, RunnerError> {
    read_jsonl(path)
}

/// Final state of one replica as summarized in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    /// Ladder slot the replica held at its last step.
    pub slot: usize,
    /// Steps completed (less than the budget only on divergence).
    pub steps: u64,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_error: Option<f64>,
}

/// `meta.json`: the run's identity (config + hash), its outcome, and a
/// per-replica summary. Deliberately contains nothing time- or
/// host-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub mode: String,
    /// "complete" or "aborted".
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Slot hyperparameter values in β order (coldest last).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ladder: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub resolved_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub schedule: Option<crate::tempering::PtSchedule>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seeds: Option<crate::tempering::Seeds>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stats: Option<crate::tempering::AcceptanceStats>,
    #[serde(default)]
    pub diverged_replicas: Vec<usize>,
    #[serde(rename = "final", default)]
    pub final_state: Vec<ReplicaSummary>,
}
