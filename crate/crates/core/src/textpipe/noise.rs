//! Seeded denoising perturbation: delete, substitute, swap.

use serde::{Deserialize, Serialize};

use crate::engine::Rng;

use super::sentence::Sentence;
use super::vocab::Vocabulary;
use super::TextError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p_delete: f64,
    pub p_substitute: f64,
    pub p_swap: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { p_delete: 0.1, p_substitute: 0.1, p_swap: 0.1, seed: 0 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), TextError> {
        for (field, value) in [
            ("p_delete", self.p_delete),
            ("p_substitute", self.p_substitute),
            ("p_swap", self.p_swap),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(TextError::BadProbability { field, value });
            }
        }
        Ok(())
    }
}

/// Perturb using the spec's own seed. Identical inputs give identical output.
pub fn perturb(m: &Sentence, spec: &NoiseSpec, vocab: &Vocabulary) -> Result<Sentence, TextError> {
    let mut rng = Rng::new(spec.seed);
    perturb_with(m, spec, vocab, &mut rng)
}

/// Perturb drawing randomness from a caller-supplied stream, so corpus loops
/// can fork one sub-generator per sentence.
///
/// One pass deletes or substitutes each token independently; a second pass
/// swaps survivors with their right neighbor. Substitutions draw uniformly
/// from the vocabulary's content types, never from the reserved block.
pub fn perturb_with(
    m: &Sentence,
    spec: &NoiseSpec,
    vocab: &Vocabulary,
    rng: &mut Rng,
) -> Result<Sentence, TextError> {
    spec.validate()?;
    let content_types = vocab.size() - vocab.content_start();
    let mut kept: Vec<String> = Vec::with_capacity(m.tokens.len());
    for tok in &m.tokens {
        if rng.unit() < spec.p_delete {
            continue;
        }
        if spec.p_substitute > 0.0 && rng.unit() < spec.p_substitute && content_types > 0 {
            let id = vocab.content_start() + rng.below(content_types);
            kept.push(vocab.token_of(id).to_string());
        } else {
            kept.push(tok.clone());
        }
    }
    let mut i = 0;
    while i + 1 < kept.len() {
        if rng.unit() < spec.p_swap {
            kept.swap(i, i + 1);
            i += 2;
        } else {
            i += 1;
        }
    }
    Ok(Sentence::from_tokens(kept, &m.language))
}
