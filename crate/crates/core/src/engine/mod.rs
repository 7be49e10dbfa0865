//! Minimal f64 compute engine: tensors, seeded RNG, a reverse-mode tape,
//! optimizers, checkpoint IO and a finite-difference gradient checker.

pub mod blocks;
pub mod checkpoint;
pub mod gradcheck;
pub mod kernels;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use gradcheck::{gradcheck, GradCheckReport, GradCheckSettings};
pub use optim::{AdamState, OptState, RmsPropState};
pub use params::ParameterSet;
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NotScalarLoss { shape: Vec<usize> },
    #[error("duplicate parameter name `{name}`")]
    DuplicateParam { name: String },
    #[error("missing parameter `{name}`")]
    MissingParam { name: String },
    #[error("bad checkpoint: {reason}")]
    CheckpointFormat { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
