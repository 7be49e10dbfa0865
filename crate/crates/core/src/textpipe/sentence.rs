//! Sentences as whitespace token sequences with a language code.

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use super::TextError;

/// A tokenized sentence. `surface` is always the space-joined token sequence,
/// so transformations that rewrite tokens keep the two views consistent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub language: String,
}

impl Sentence {
    pub fn from_text(text: &str, language: &str) -> Self {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        Sentence { tokens, language: language.to_string() }
    }

    pub fn from_tokens(tokens: Vec<String>, language: &str) -> Self {
        Sentence { tokens, language: language.to_string() }
    }

    pub fn surface(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// The reserved tag token announcing a target language.
pub fn tag_token(target_lang: &str) -> String {
    format!("\u{27e8}2{target_lang}\u{27e9}")
}

/// The language named by a tag token, if the string is one.
pub fn parse_tag(token: &str) -> Option<&str> {
    token
        .strip_prefix("\u{27e8}2")
        .and_then(|rest| rest.strip_suffix('\u{27e9}'))
        .filter(|lang| !lang.is_empty())
}

/// Prepend the target-language tag. Tagging a tagged sentence is rejected, as
/// is a language the vocabulary has no tag for.
pub fn tag_source(
    s: &Sentence,
    target_lang: &str,
    vocab: &Vocabulary,
) -> Result<Sentence, TextError> {
    let tag = tag_token(target_lang);
    if !vocab.is_tag_token(&tag) {
        return Err(TextError::UnregisteredLanguage(target_lang.to_string()));
    }
    if s.tokens.first().is_some_and(|t| vocab.is_tag_token(t)) {
        return Err(TextError::AlreadyTagged);
    }
    let mut tokens = Vec::with_capacity(s.tokens.len() + 1);
    tokens.push(tag);
    tokens.extend_from_slice(&s.tokens);
    Ok(Sentence { tokens, language: s.language.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_round_trips_tokens() {
        let s = Sentence::from_text("  ka   ru  mi ", "l1");
        assert_eq!(s.tokens, vec!["ka", "ru", "mi"]);
        assert_eq!(s.surface(), "ka ru mi");
    }

    #[test]
    fn tagging_prepends_and_rejects_double_tag() {
        let vocab = Vocabulary::build(["hello there"].into_iter(), &["l2"]).unwrap();
        let s = Sentence::from_text("hello", "l1");
        let tagged = tag_source(&s, "l2", &vocab).unwrap();
        assert_eq!(tagged.surface(), "\u{27e8}2l2\u{27e9} hello");
        assert!(matches!(
            tag_source(&tagged, "l2", &vocab),
            Err(TextError::AlreadyTagged)
        ));
    }

    #[test]
    fn parse_tag_inverts_tag_token() {
        assert_eq!(parse_tag(&tag_token("hld")), Some("hld"));
        assert_eq!(parse_tag("hello"), None);
        assert_eq!(parse_tag("\u{27e8}2\u{27e9}"), None);
    }

    #[test]
    fn unregistered_language_is_rejected() {
        let vocab = Vocabulary::build(["hello"].into_iter(), &["l2"]).unwrap();
        let s = Sentence::from_text("hello", "l1");
        assert!(matches!(
            tag_source(&s, "xx", &vocab),
            Err(TextError::UnregisteredLanguage(_))
        ));
    }
}
