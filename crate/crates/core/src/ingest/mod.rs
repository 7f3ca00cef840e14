//! Event file I/O, DVS simulation and toy dataset generation.

use std::path::Path;

use thiserror::Error;

pub mod evt;
pub mod imageio;
pub mod manifest;
pub mod sim;
pub mod toy;

pub use evt::{parse_event_file, write_event_file};
pub use manifest::{DatasetManifest, InstanceEntry};
pub use sim::{simulate_dvs, IntensityFrame, MotionTrajectory, SimulatorConfig, TrajectorySample};
pub use toy::{generate_toy_dataset, ToyConfig};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed record at line {line} (byte {offset}): {reason}")]
    MalformedRecord {
        line: usize,
        offset: usize,
        reason: String,
    },
    #[error("event at line {line} lies outside the sensor: ({x}, {y})")]
    OutOfBoundsEvent { line: usize, x: u64, y: u64 },
    #[error("timestamp {t} at line {line} precedes the previous timestamp {previous}")]
    NonMonotonicTimestamp { line: usize, t: u64, previous: u64 },
    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),
    #[error("invalid intensity frame: {0}")]
    InvalidFrame(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("image {path}: {reason}")]
    Image { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Reads and parses an EVT file.
pub fn read_event_file(path: &Path) -> Result<crate::event::EventStream, IngestError> {
    let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
    parse_event_file(&bytes)
}
