//! Minimal differentiable tensor core, the network trio and the training
//! objectives.

use thiserror::Error;

pub mod graph;
pub mod io;
pub mod loss;
pub mod net;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{Bound, Graph, Var};
pub use loss::{loss_contrastive, loss_discriminator, loss_identity, loss_total};
pub use net::{Embedding, Modality, Model, NetworkSpec};
pub use optim::{AdamConfig, Optimizer, OptimizerConfig, SgdConfig};
pub use params::{Group, ParamGrads, ParameterSet};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("malformed parameter data: {0}")]
    Format(String),
}
