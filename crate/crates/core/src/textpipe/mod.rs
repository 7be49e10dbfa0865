//! Text plumbing: sentences, shared vocabularies, reversible transliteration,
//! seeded perturbation and corpus file IO.

pub mod corpus;
pub mod noise;
pub mod sentence;
pub mod translit;
pub mod vocab;

pub use corpus::{load_lines, save_lines, ParallelCorpus, Split};
pub use noise::{perturb, perturb_with, NoiseSpec};
pub use sentence::{parse_tag, tag_source, tag_token, Sentence};
pub use translit::{Coverage, TransliterationTable};
pub use vocab::Vocabulary;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("parallel files differ in length: {src} vs {tgt} lines")]
    LengthMismatch { src: usize, tgt: usize },
    #[error("empty corpus: {context}")]
    EmptyCorpus { context: String },
    #[error("language `{0}` has no registered tag token")]
    UnregisteredLanguage(String),
    #[error("sentence already carries a language tag")]
    AlreadyTagged,
    #[error("transliteration table is not bijective: {0}")]
    NotBijective(String),
    #[error("invalid noise probability {value} for {field}")]
    BadProbability { field: &'static str, value: f64 },
    #[error("malformed table line {line}: {reason}")]
    BadTableLine { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
