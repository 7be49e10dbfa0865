//! Adversarially trained translator: a GRU attention seq2seq generator and
//! a convolutional pair-matcher critic, trained Wasserstein-style with
//! weight clipping and a per-language reward readout driving early stopping.

pub mod critic;
pub mod daasi;
pub mod generator;
pub mod pretrain;

pub use critic::{conv_layer, critic_loss_value, feature_map, pool_layer, Critic};
pub use daasi::{critic_step, train_daasi, DaasiLog, IdPair};
pub use generator::{Generator, NmtConfig};
pub use pretrain::{build_vocab, pretrain_generator, pretrain_with, PretrainLog};

use crate::engine::EngineError;
use crate::textpipe::TextError;

#[derive(Debug, thiserror::Error)]
pub enum NmtError {
    #[error("empty sentence where tokens are required")]
    EmptySentence,
    #[error("empty batch")]
    EmptyBatch,
    #[error("source sentence is not tagged with a target language")]
    UntaggedInput,
    #[error("training diverged: {context}")]
    Diverged { context: String },
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Reward(#[from] crate::reward::RewardError),
}
