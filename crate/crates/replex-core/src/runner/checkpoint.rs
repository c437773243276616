//! `checkpoint.bin`: final replica weights in a fixed little-endian binary
//! layout. Floats are stored as raw IEEE-754 bits, so a write/read cycle is
//! exactly the identity — including -0.0, subnormals, and extreme
//! magnitudes.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      [u8; 4]   = "RXCP"
//! version    u32       = 1
//! n_replicas u32
//! dim        u64       (weights per replica)
//! repeat n_replicas times:
//!   id              u32
//!   final_slot      u32
//!   steps_completed u64
//!   diverged        u8   (0 or 1)
//!   weights         dim × f64
//! ```

use std::path::Path;

use crate::tempering::PtOutcome;

use super::metrics::atomic_write;
use super::RunnerError;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RXCP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One replica's row in the checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaCheckpoint {
    pub id: u32,
    pub final_slot: u32,
    pub steps_completed: u64,
    pub diverged: bool,
    pub weights: Vec<f64>,
}

/// A parsed `checkpoint.bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointFile {
    pub dim: u64,
    pub replicas: Vec<ReplicaCheckpoint>,
}

/// Writes the final weights of every replica in `outcome`, atomically.
pub fn write_checkpoint(path: &Path, outcome: &PtOutcome) -> Result<(), RunnerError> {
    let dim = outcome.replicas.first().map_or(0, |r| r.weights.len()) as u64;
    let mut buf = Vec::with_capacity(
        4 + 4 + 4 + 8 + outcome.replicas.len() * (4 + 4 + 8 + 1 + 8 * dim as usize),
    );
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(outcome.replicas.len() as u32).to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    for r in &outcome.replicas {
        debug_assert_eq!(r.weights.len() as u64, dim, "replicas share one dimension");
        buf.extend_from_slice(&(r.id as u32).to_le_bytes());
        buf.extend_from_slice(&(r.final_slot as u32).to_le_bytes());
        buf.extend_from_slice(&r.steps_completed.to_le_bytes());
        buf.push(r.diverged as u8);
        for &w in &r.weights {
            buf.extend_from_slice(&w.to_bits().to_le_bytes());
        }
    }
    atomic_write(path, &buf)
}

/// Byte cursor that reports the offset of the first defect it meets.
struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N], RunnerError> {
        match self.bytes.get(self.offset..self.offset + N) {
            Some(chunk) => {
                let mut out = [0u8; N];
                out.copy_from_slice(chunk);
                self.offset += N;
                Ok(out)
            }
            None => Err(RunnerError::Checkpoint {
                path: self.path.to_path_buf(),
                offset: self.offset as u64,
                message: format!(
                    "file truncated: needed {N} bytes for {what}, had {}",
                    self.bytes.len() - self.offset
                ),
            }),
        }
    }

    fn fail(&self, at: usize, message: String) -> RunnerError {
        RunnerError::Checkpoint { path: self.path.to_path_buf(), offset: at as u64, message }
    }
}

/// Reads and fully validates a `checkpoint.bin`, reporting the byte offset
/// of any structural defect.
pub fn read_checkpoint(path: &Path) -> Result<CheckpointFile, RunnerError> {
    let bytes = std::fs::read(path).map_err(RunnerError::io(path))?;
    let mut cur = Cursor { path, bytes: &bytes, offset: 0 };

    let at = cur.offset;
    let magic: [u8; 4] = cur.take("magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(cur.fail(at, format!("bad magic {magic:02x?}, expected {CHECKPOINT_MAGIC:02x?}")));
    }
    let at = cur.offset;
    let version = u32::from_le_bytes(cur.take("version")?);
    if version != CHECKPOINT_VERSION {
        return Err(cur.fail(at, format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let n_replicas = u32::from_le_bytes(cur.take("replica count")?);
    let dim = u64::from_le_bytes(cur.take("dimension")?);

    let mut replicas = Vec::with_capacity(n_replicas as usize);
    for _ in 0..n_replicas {
        let id = u32::from_le_bytes(cur.take("replica id")?);
        let final_slot = u32::from_le_bytes(cur.take("final slot")?);
        let steps_completed = u64::from_le_bytes(cur.take("step count")?);
        let at = cur.offset;
        let diverged = match cur.take::<1>("divergence flag")?[0] {
            0 => false,
            1 => true,
            other => return Err(cur.fail(at, format!("divergence flag must be 0 or 1, got {other}"))),
        };
        let mut weights = Vec::with_capacity(dim as usize);
        for _ in 0..dim {
            weights.push(f64::from_bits(u64::from_le_bytes(cur.take("weight")?)));
        }
        replicas.push(ReplicaCheckpoint { id, final_slot, steps_completed, diverged, weights });
    }
    if cur.offset != bytes.len() {
        return Err(cur.fail(
            cur.offset,
            format!("{} trailing bytes after the last replica", bytes.len() - cur.offset),
        ));
    }
    Ok(CheckpointFile { dim, replicas })
}
