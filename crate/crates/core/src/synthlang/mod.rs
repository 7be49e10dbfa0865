//! Procedurally generated families of related toy languages.
//!
//! A template grammar over a syllable lexicon produces base sentences. A
//! language is derived from the base by remapping a divergence-controlled
//! subset of word types through a per-language character cipher plus a
//! language-marking suffix. Remap sets are nested across divergence levels
//! (one shared hash decides which types move), so lexical overlap between
//! family members falls off monotonically with divergence.

pub mod experiment;
pub mod family;
pub mod grammar;

pub use experiment::{make_experiment, BundleSpec, ExperimentManifest, LanguageEntry};
pub use family::{derive_language, derive_sentence, LanguageSpec};
pub use grammar::{gen_base_corpus, Grammar};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid bundle: {0}")]
    BadSpec(String),
    #[error("corpus size must be at least 1")]
    EmptyRequest,
    #[error("divergence {0} outside [0, 1]")]
    BadDivergence(f64),
    #[error(transparent)]
    Text(#[from] crate::textpipe::TextError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}
