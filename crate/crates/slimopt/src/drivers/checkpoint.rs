//! Checkpoint files: one JSON header line, then the raw little-endian `f32`
//! weight blob in layer order (weight tensor, then bias, per layer).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archspec::ArchSpec;
use crate::nn::SharedWeights;

use super::{DriverError, JoslimConfig, Method, RunArtifacts};

/// First line of a checkpoint file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Architecture spec name the blob belongs to.
    pub spec: String,
    pub method: Method,
    /// Gradient steps completed.
    pub steps: usize,
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    /// Byte length of the weight blob that follows the header line.
    pub blob_bytes: usize,
    pub config: JoslimConfig,
}

/// Writes header + blob for a finished run.
pub fn save_checkpoint(
    path: &Path,
    artifacts: &RunArtifacts,
    config: &JoslimConfig,
) -> Result<(), DriverError> {
    let blob = artifacts.weights.to_bytes();
    let header = CheckpointHeader {
        spec: artifacts.spec_name.clone(),
        method: artifacts.method,
        steps: artifacts.steps_done,
        seed: artifacts.seed,
        blob_bytes: blob.len(),
        config: config.clone(),
    };
    let mut file = fs::File::create(path)?;
    serde_json::to_writer(&mut file, &header)
        .map_err(|e| DriverError::Checkpoint(e.to_string()))?;
    file.write_all(b"\n")?;
    file.write_all(&blob)?;
    Ok(())
}

/// Reads a checkpoint and materializes the weights against `spec`,
/// validating the header's spec name and the blob size.
pub fn load_checkpoint(
    path: &Path,
    spec: &ArchSpec,
) -> Result<(CheckpointHeader, SharedWeights), DriverError> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| DriverError::Checkpoint("missing header line".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| DriverError::Checkpoint(format!("bad header: {e}")))?;
    if header.spec != spec.name {
        return Err(DriverError::Checkpoint(format!(
            "checkpoint is for spec `{}`, expected `{}`",
            header.spec, spec.name
        )));
    }
    let blob = &bytes[newline + 1..];
    if blob.len() != header.blob_bytes {
        return Err(DriverError::Checkpoint(format!(
            "blob is {} bytes, header says {}",
            blob.len(),
            header.blob_bytes
        )));
    }
    let weights = SharedWeights::from_bytes(spec, blob)?;
    Ok((header, weights))
}
