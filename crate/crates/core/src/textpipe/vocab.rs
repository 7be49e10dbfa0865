//! Shared vocabulary with a reserved id block.
//!
//! Id layout: language tags first (the lowest ids), then pad/bos/eos/unk,
//! then content types ordered by descending frequency with lexicographic
//! tie-breaks.

use std::collections::{BTreeMap, HashMap};

use super::sentence::{tag_token, Sentence};
use super::TextError;

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    n_tags: usize,
}

impl Vocabulary {
    /// Build a shared vocabulary over raw text lines. `tag_langs` lists the
    /// target languages that get reserved tag tokens.
    pub fn build<'a, I>(lines: I, tag_langs: &[&str]) -> Result<Self, TextError>
    where
        I: Iterator<Item = &'a str>,
    {
        let mut freq: BTreeMap<String, u64> = BTreeMap::new();
        let mut any = false;
        for line in lines {
            for tok in line.split_whitespace() {
                any = true;
                *freq.entry(tok.to_string()).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(TextError::EmptyCorpus { context: "vocabulary build".into() });
        }

        let mut tokens: Vec<String> = tag_langs.iter().map(|l| tag_token(l)).collect();
        let n_tags = tokens.len();
        for special in ["<pad>", "<s>", "</s>", "<unk>"] {
            tokens.push(special.to_string());
        }

        let mut content: Vec<(String, u64)> = freq
            .into_iter()
            .filter(|(t, _)| !tokens.contains(t))
            .collect();
        content.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        tokens.extend(content.into_iter().map(|(t, _)| t));

        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { tokens, index, n_tags })
    }

    /// Rebuild a vocabulary from its serialized parts (checkpoint metadata).
    pub fn from_parts(tokens: Vec<String>, n_tags: usize) -> Result<Self, TextError> {
        if tokens.len() < n_tags + 4 {
            return Err(TextError::EmptyCorpus { context: "vocabulary parts".into() });
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { tokens, index, n_tags })
    }

    /// Serialize as a space-joined token list (tokens never contain spaces).
    pub fn to_parts(&self) -> (String, usize) {
        (self.tokens.join(" "), self.n_tags)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_tags(&self) -> usize {
        self.n_tags
    }

    pub fn pad_id(&self) -> usize {
        self.n_tags
    }

    pub fn bos_id(&self) -> usize {
        self.n_tags + 1
    }

    pub fn eos_id(&self) -> usize {
        self.n_tags + 2
    }

    pub fn unk_id(&self) -> usize {
        self.n_tags + 3
    }

    /// First id that is an ordinary content type.
    pub fn content_start(&self) -> usize {
        self.n_tags + 4
    }

    pub fn is_tag_id(&self, id: usize) -> bool {
        id < self.n_tags
    }

    pub fn is_tag_token(&self, token: &str) -> bool {
        self.index.get(token).is_some_and(|&id| self.is_tag_id(id))
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id < self.content_start()
    }

    /// Token to id, unknowns map to `<unk>`.
    pub fn id_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or_else(|| self.unk_id())
    }

    /// Does the exact token exist (no unk fallback)?
    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token_of(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, s: &Sentence) -> Vec<usize> {
        s.tokens.iter().map(|t| self.id_of(t)).collect()
    }

    pub fn decode(&self, ids: &[usize], language: &str) -> Sentence {
        let tokens = ids.iter().map(|&i| self.tokens[i].clone()).collect();
        Sentence::from_tokens(tokens, language)
    }
}
