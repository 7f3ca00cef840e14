//! Alternating adversarial / metric training of the two-modality network.

pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod fit;
pub mod probe;
pub mod step;

use thiserror::Error;

use crate::encode::EncodeError;
use crate::ingest::IngestError;
use crate::neural::NeuralError;

pub use augment::{augment, augment_with, Augmentation, ANGLES};
pub use checkpoint::Checkpoint;
pub use config::{Ablations, NetworkShape, TrainConfig};
pub use data::{sample_batch, Batch, LabeledImage, Pool};
pub use fit::{fit, fit_from, EpochMetrics};
pub use probe::{probe_modality_accuracy, ProbeConfig};
pub use step::{train_step, StepReport, Trainer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("need at least 2 instances with data, found {0}")]
    InsufficientInstances(usize),
    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Divergence {
        epoch: usize,
        step: usize,
        reason: String,
        /// Last state whose losses were all finite.
        last_good: Option<Box<Checkpoint>>,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}
