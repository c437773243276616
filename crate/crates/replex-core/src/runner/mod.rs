//! Config-driven orchestration: parse an experiment file, execute the
//! requested mode on a worker pool, persist metrics/events/checkpoints
//! atomically, and emit plot-ready tables.
//!
//! A run directory is the unit of output. Every file in it is written via
//! temp-file-plus-rename, so an interrupted run never leaves a truncated
//! file under its final name, and every byte is a pure function of the
//! resolved config — rerunning a config reproduces the directory exactly.

mod checkpoint;
mod config;
mod execute;
mod metrics;
mod plots;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointFile, ReplicaCheckpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{
    CValue, CalibrationSection, DatasetSection, DatasetSource, DiffusionSection, ExperimentConfig,
    GibbsSection, LadderSection, LangevinSection, Mode, ObjectiveKind, ObjectiveSection,
    OptimizerSection, ScheduleSection, SeedsSection, EXCHANGE_STREAM_SALT,
};
pub use execute::{
    execute, persist, persist_abort, CalibrationRecord, DiffusionRecord, GibbsRecord, GibbsReport,
    RecordBody, RunRecord, SlotGibbs, TrainingRecord,
};
pub use metrics::{
    atomic_write, read_curves, read_events, read_jsonl, read_metrics, write_json, write_jsonl,
    Meta, ReplicaSummary,
};
pub use plots::{emit_plots, emit_plots_data, pt_best_replica, PlotData, PlotKind};

use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong between a config file and a finished run
/// directory. [`RunnerError::exit_code`] gives the process-level mapping.
#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("checkpoint file {path}: {message} (at byte offset {offset})")]
    Checkpoint { path: PathBuf, offset: u64, message: String },
    #[error(transparent)]
    Engine(#[from] crate::tempering::TemperingError),
    #[error(transparent)]
    Diffusion(#[from] crate::diffusion::DiffusionError),
    #[error(transparent)]
    Gibbs(#[from] crate::gibbs::GibbsError),
    #[error("plot `{0}` is not available in this record")]
    PlotUnavailable(&'static str),
}

impl RunnerError {
    /// Curried I/O-error constructor: `.map_err(RunnerError::io(path))`.
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunnerError {
        let path = path.into();
        move |source| RunnerError::Io { path, source }
    }

    /// Process exit code for this failure: 2 for configuration and other
    /// pre-flight problems, 4 for I/O and damaged artifacts. (Successful
    /// runs exit 0, or 3 when a replica diverged — see the CLI.)
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Io { .. } | RunnerError::Malformed { .. } | RunnerError::Checkpoint { .. } => 4,
            _ => 2,
        }
    }
}
