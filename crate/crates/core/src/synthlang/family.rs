//! Deriving a related language from a base corpus.

use serde::{Deserialize, Serialize};

use crate::engine::rng::{label_hash, mix64};
use crate::textpipe::Sentence;

use super::grammar::{CONSONANTS, VOWELS};
use super::SynthError;

/// Consonants reserved for language-marking suffixes; never used by the
/// grammar, so remapped forms cannot collide with base forms.
const SUFFIXES: [char; 6] = ['x', 'q', 'v', 'j', 'z', 'w'];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub code: String,
    /// Fraction of word types remapped away from the base, in [0, 1].
    pub divergence: f64,
    /// Family seed; shared across languages so remap sets nest by divergence.
    pub seed: u64,
}

impl LanguageSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.divergence) || !self.divergence.is_finite() {
            return Err(SynthError::BadDivergence(self.divergence));
        }
        Ok(())
    }

    fn suffix(&self) -> char {
        SUFFIXES[(mix64(self.seed ^ label_hash(&self.code)) % SUFFIXES.len() as u64) as usize]
    }

    /// Shared per-type hash in [0, 1): a type moves iff its hash falls below
    /// the divergence threshold, giving nested remap sets across levels.
    fn type_hash(&self, word: &str) -> f64 {
        let h = mix64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ label_hash(word));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Per-language character cipher: seeded permutations of the consonant
    /// and vowel inventories, applied character-wise.
    fn cipher(&self, word: &str) -> String {
        let perm_seed = mix64(self.seed ^ label_hash(&self.code).rotate_left(17));
        let mut cons: Vec<char> = CONSONANTS.to_vec();
        let mut vows: Vec<char> = VOWELS.to_vec();
        permute(&mut cons, perm_seed);
        permute(&mut vows, perm_seed.wrapping_add(1));
        word.chars()
            .map(|c| {
                if let Some(i) = CONSONANTS.iter().position(|&x| x == c) {
                    cons[i]
                } else if let Some(i) = VOWELS.iter().position(|&x| x == c) {
                    vows[i]
                } else {
                    c
                }
            })
            .collect()
    }

    /// Transform one word type. Identity below the divergence threshold;
    /// otherwise cipher plus language suffix.
    pub fn map_type(&self, word: &str) -> String {
        if self.divergence > 0.0 && self.type_hash(word) < self.divergence {
            let mut w = self.cipher(word);
            w.push(self.suffix());
            w
        } else {
            word.to_string()
        }
    }
}

/// Deterministic Fisher-Yates driven by splitmix iterates; independent of the
/// engine RNG so the mapping is a pure function of the seed.
fn permute<T>(items: &mut [T], seed: u64) {
    let mut state = seed;
    for i in (1..items.len()).rev() {
        state = mix64(state.wrapping_add(0x9e37_79b9_7f4a_7c15));
        items.swap(i, (state % (i as u64 + 1)) as usize);
    }
}

pub fn derive_sentence(s: &Sentence, spec: &LanguageSpec) -> Sentence {
    let tokens = s.tokens.iter().map(|t| spec.map_type(t)).collect();
    Sentence::from_tokens(tokens, &spec.code)
}

/// Sentence-aligned transform of a whole corpus.
pub fn derive_language(
    base: &[Sentence],
    spec: &LanguageSpec,
) -> Result<Vec<Sentence>, SynthError> {
    spec.validate()?;
    Ok(base.iter().map(|s| derive_sentence(s, spec)).collect())
}
