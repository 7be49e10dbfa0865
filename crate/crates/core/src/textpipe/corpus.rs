//! Corpus file IO: one sentence per line, parallel corpora aligned by line.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sentence::Sentence;
use super::TextError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParallelCorpus {
    pub pairs: Vec<(Sentence, Sentence)>,
    pub split: Split,
    /// Line pairs dropped because at least one side was empty.
    pub dropped: usize,
}

impl ParallelCorpus {
    pub fn from_pairs(pairs: Vec<(Sentence, Sentence)>, split: Split) -> Self {
        ParallelCorpus { pairs, split, dropped: 0 }
    }

    /// Read two aligned files. Differing line counts are an error; pairs with
    /// an empty side are dropped and counted.
    pub fn load(
        src_path: &Path,
        tgt_path: &Path,
        src_lang: &str,
        tgt_lang: &str,
        split: Split,
    ) -> Result<Self, TextError> {
        let src = fs::read_to_string(src_path)?;
        let tgt = fs::read_to_string(tgt_path)?;
        let src_lines: Vec<&str> = src.lines().collect();
        let tgt_lines: Vec<&str> = tgt.lines().collect();
        if src_lines.len() != tgt_lines.len() {
            return Err(TextError::LengthMismatch {
                src: src_lines.len(),
                tgt: tgt_lines.len(),
            });
        }
        let mut pairs = Vec::with_capacity(src_lines.len());
        let mut dropped = 0;
        for (s, t) in src_lines.iter().zip(&tgt_lines) {
            let s = Sentence::from_text(s, src_lang);
            let t = Sentence::from_text(t, tgt_lang);
            if s.is_empty() || t.is_empty() {
                dropped += 1;
                continue;
            }
            pairs.push((s, t));
        }
        Ok(ParallelCorpus { pairs, split, dropped })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn save(&self, src_path: &Path, tgt_path: &Path) -> Result<(), TextError> {
        let mut src = fs::File::create(src_path)?;
        let mut tgt = fs::File::create(tgt_path)?;
        for (s, t) in &self.pairs {
            writeln!(src, "{}", s.surface())?;
            writeln!(tgt, "{}", t.surface())?;
        }
        Ok(())
    }
}

/// Load a monolingual corpus, skipping empty lines.
pub fn load_lines(path: &Path, language: &str) -> Result<Vec<Sentence>, TextError> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Sentence::from_text(l, language))
        .collect())
}

pub fn save_lines(path: &Path, sentences: &[Sentence]) -> Result<(), TextError> {
    let mut f = fs::File::create(path)?;
    for s in sentences {
        writeln!(f, "{}", s.surface())?;
    }
    Ok(())
}
