//! Evaluation and corpus-analysis metrics.

pub mod bleu;
pub mod chrf;
pub mod lm;

pub use bleu::bleu;
pub use chrf::{chrf2, chrf2_corpus, chrf_beta};
pub use lm::{
    cross_perplexity_matrix, entropy, perplexity, train_unigram_lm, train_unigram_lm_over,
    train_unigram_lm_unsmoothed, ttr, UnigramLm,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A named metric value with the parameters it was computed under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: String,
    pub value: f64,
    pub params: std::collections::BTreeMap<String, String>,
}

impl MetricScore {
    pub fn new(name: &str, value: f64) -> Self {
        MetricScore { name: name.to_string(), value, params: Default::default() }
    }

    pub fn with_param(mut self, key: &str, value: &str) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("hypothesis and reference lists differ in length: {hyps} vs {refs}")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty corpus: {context}")]
    EmptyCorpus { context: String },
}
