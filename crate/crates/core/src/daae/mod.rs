//! Denoising adversarial autoencoder: a deterministic GRU encoder whose
//! final hidden state is the latent code, an autoregressive GRU decoder
//! conditioned on that code, and a feed-forward discriminator that pushes
//! encodings toward a Gaussian prior.

pub mod model;
pub mod train;

pub use model::{adv_loss, rec_loss, DaaeModel};
pub use train::{train_daae, DaaeConfig, TrainLog};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DaaeError {
    #[error("empty sentence cannot be encoded")]
    EmptySentence,
    #[error("empty batch")]
    EmptyBatch,
    #[error("latent code has {got} entries, model expects {expected}")]
    LatentDim { expected: usize, got: usize },
    #[error("training diverged: {context}")]
    Diverged { context: String },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Text(#[from] crate::textpipe::TextError),
}
